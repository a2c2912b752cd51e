#include "aecbse/stft.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

#include "aecbse/error.h"

namespace aecbse {
namespace {

// FFTW planning is not thread-safe; execution on plan-owned buffers is.
std::mutex& PlannerMutex() {
  static std::mutex mutex;
  return mutex;
}

// Real-to-complex / complex-to-real plan pair on owned aligned buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    real_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    spec_ = static_cast<fftw_complex*>(
        fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    std::lock_guard<std::mutex> lock(PlannerMutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec_,
                                    FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, real_,
                                    FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* real() { return real_; }
  Complex* spectrum() { return reinterpret_cast<Complex*>(spec_); }
  void Forward() { fftw_execute(forward_); }
  // Unnormalized: the caller divides by n.
  void Inverse() { fftw_execute(inverse_); }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace

FrameSpec FrameSpec::SqrtHann(std::size_t frame_len, std::size_t hop,
                              double sample_rate) {
  FrameSpec spec;
  spec.frame_len = frame_len;
  spec.hop = hop;
  spec.sample_rate = sample_rate;
  spec.window.resize(frame_len);
  for (std::size_t n = 0; n < frame_len; ++n) {
    const double hann =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                             static_cast<double>(frame_len));
    spec.window[n] = std::sqrt(hann);
  }
  return spec;
}

FrameSpec FrameSpec::Rectangular(std::size_t frame_len, std::size_t hop,
                                 double sample_rate) {
  FrameSpec spec;
  spec.frame_len = frame_len;
  spec.hop = hop;
  spec.sample_rate = sample_rate;
  spec.window.assign(frame_len, 1.0);
  return spec;
}

std::size_t FrameSpec::num_frames(std::size_t num_samples) const {
  if (num_samples <= frame_len) return 1;
  return (num_samples - frame_len + hop - 1) / hop + 1;
}

double FrameSpec::overlap_add_gain() const {
  if (frame_len < 2 || (frame_len & (frame_len - 1)) != 0)
    throw ConfigError("frame length must be a power of two >= 2, got " +
                      std::to_string(frame_len));
  if (hop == 0 || frame_len % hop != 0)
    throw ConfigError("hop " + std::to_string(hop) +
                      " does not divide frame length " +
                      std::to_string(frame_len));
  if (window.size() != frame_len)
    throw ConfigError("window length does not match frame length");

  std::vector<double> sums(hop, 0.0);
  for (std::size_t n = 0; n < frame_len; ++n)
    sums[n % hop] += window[n] * window[n];
  const double gain = sums.front();
  if (!(gain > 0.0)) throw ConfigError("window has zero overlap-add gain");
  for (double s : sums) {
    if (std::abs(s - gain) > 1e-12 * gain)
      throw ConfigError("window violates the constant overlap-add condition");
  }
  return gain;
}

void FrameSpec::Validate() const {
  overlap_add_gain();
  if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
}

Spectrogram::Spectrogram(std::size_t bins, std::size_t frames,
                         std::size_t channels)
    : bins_(bins),
      frames_(frames),
      channels_(channels),
      data_(bins * frames * channels, Complex(0.0, 0.0)) {}

Spectrogram::Spectrogram(const FrameSpec& frame_spec, std::size_t frames,
                         std::size_t channels, std::size_t length)
    : Spectrogram(frame_spec.num_bins(), frames, channels) {
  spec = frame_spec;
  signal_length = length;
}

Spectrogram Spectrogram::channel(std::size_t m) const {
  if (m >= channels_)
    throw ConfigError("channel " + std::to_string(m) + " out of range");
  Spectrogram out(bins_, frames_, 1);
  out.spec = spec;
  out.signal_length = signal_length;
  for (std::size_t f = 0; f < bins_; ++f)
    out.bin(f).col(0) = bin(f).col(m);
  return out;
}

Spectrogram& Spectrogram::operator+=(const Spectrogram& other) {
  if (!same_shape(other)) throw ConfigError("spectrogram shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Spectrogram& Spectrogram::operator-=(const Spectrogram& other) {
  if (!same_shape(other)) throw ConfigError("spectrogram shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Spectrogram& Spectrogram::operator*=(Complex scale) {
  for (auto& v : data_) v *= scale;
  return *this;
}

Spectrogram operator+(Spectrogram a, const Spectrogram& b) { return a += b; }
Spectrogram operator-(Spectrogram a, const Spectrogram& b) { return a -= b; }
Spectrogram operator*(Complex scale, Spectrogram a) { return a *= scale; }

Spectrogram analyze(const Audio& signal, const FrameSpec& spec) {
  spec.Validate();
  if (signal.num_channels() == 0) throw ConfigError("signal has no channels");
  const std::size_t length = signal.num_samples();
  for (const auto& ch : signal.channels) {
    if (ch.size() != length)
      throw ConfigError("all channels must have equal length");
  }
  if (length < spec.frame_len)
    throw ConfigError("signal (" + std::to_string(length) +
                      " samples) is shorter than one frame (" +
                      std::to_string(spec.frame_len) + ")");

  const std::size_t frames = spec.num_frames(length);
  const std::size_t bins = spec.num_bins();
  Spectrogram out(spec, frames, signal.num_channels(), length);

  RealFft fft(spec.frame_len);
  for (std::size_t m = 0; m < signal.num_channels(); ++m) {
    const auto& x = signal.channels[m];
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t start = t * spec.hop;
      for (std::size_t n = 0; n < spec.frame_len; ++n) {
        const std::size_t i = start + n;
        fft.real()[n] = i < length ? spec.window[n] * x[i] : 0.0;
      }
      fft.Forward();
      for (std::size_t f = 0; f < bins; ++f) out(f, t, m) = fft.spectrum()[f];
    }
  }
  return out;
}

Audio synthesize(const Spectrogram& spec) {
  const FrameSpec& fs = spec.spec;
  const double gain = fs.overlap_add_gain();
  if (spec.bins() != fs.num_bins())
    throw ConfigError("spectrogram has " + std::to_string(spec.bins()) +
                      " bins, frame spec implies " +
                      std::to_string(fs.num_bins()));
  if (spec.frames() == 0 || spec.channels() == 0)
    throw ConfigError("empty spectrogram");

  const std::size_t padded = (spec.frames() - 1) * fs.hop + fs.frame_len;
  const std::size_t length =
      spec.signal_length == 0 ? padded : spec.signal_length;
  if (length > padded)
    throw ConfigError("signal length exceeds the frames' coverage");

  Audio out(spec.channels(), padded, fs.sample_rate);
  RealFft fft(fs.frame_len);
  const double scale = 1.0 / (static_cast<double>(fs.frame_len) * gain);
  for (std::size_t m = 0; m < spec.channels(); ++m) {
    auto& y = out.channels[m];
    for (std::size_t t = 0; t < spec.frames(); ++t) {
      for (std::size_t f = 0; f < spec.bins(); ++f)
        fft.spectrum()[f] = spec(f, t, m);
      fft.Inverse();
      const std::size_t start = t * fs.hop;
      for (std::size_t n = 0; n < fs.frame_len; ++n)
        y[start + n] += fs.window[n] * fft.real()[n] * scale;
    }
    y.resize(length);
  }
  return out;
}

double spectral_energy(const Spectrogram& spec, std::size_t channel) {
  const FrameSpec& fs = spec.spec;
  const double gain = fs.overlap_add_gain();
  const std::size_t last = spec.bins() - 1;
  double energy = 0.0;
  for (std::size_t f = 0; f < spec.bins(); ++f) {
    const double weight = (f == 0 || f == last) ? 1.0 : 2.0;
    for (std::size_t t = 0; t < spec.frames(); ++t)
      energy += weight * std::norm(spec(f, t, channel));
  }
  return energy / (static_cast<double>(fs.frame_len) * gain);
}

std::vector<double> fft_convolve(const std::vector<double>& x,
                                 const std::vector<double>& filter) {
  std::vector<double> y(x.size(), 0.0);
  if (x.empty() || filter.empty()) return y;
  std::size_t n = 1;
  while (n < x.size() + filter.size() - 1) n <<= 1;

  RealFft fft(n);
  std::fill(fft.real(), fft.real() + n, 0.0);
  std::copy(filter.begin(), filter.end(), fft.real());
  fft.Forward();
  std::vector<Complex> filter_spec(fft.spectrum(), fft.spectrum() + n / 2 + 1);

  std::fill(fft.real(), fft.real() + n, 0.0);
  std::copy(x.begin(), x.end(), fft.real());
  fft.Forward();
  for (std::size_t k = 0; k <= n / 2; ++k) fft.spectrum()[k] *= filter_spec[k];
  fft.Inverse();
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fft.real()[i] * scale;
  return y;
}

}  // namespace aecbse
