#ifndef AECBSE_STFT_H_
#define AECBSE_STFT_H_

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace aecbse {

using Complex = std::complex<double>;

// Multichannel time-domain audio, channel-major.
struct Audio {
  std::vector<std::vector<double>> channels;
  double sample_rate = 16000.0;

  Audio() = default;
  Audio(std::size_t num_channels, std::size_t num_samples, double rate)
      : channels(num_channels, std::vector<double>(num_samples, 0.0)),
        sample_rate(rate) {}

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const {
    return channels.empty() ? 0 : channels.front().size();
  }
};

// Frame length, hop and analysis/synthesis window. The same window is used
// for analysis and synthesis; the overlap-added squared window must be
// constant for the chosen hop.
struct FrameSpec {
  std::size_t frame_len = 2048;
  std::size_t hop = 1024;
  double sample_rate = 16000.0;
  std::vector<double> window;

  // Square-root periodic Hann window.
  static FrameSpec SqrtHann(std::size_t frame_len, std::size_t hop,
                            double sample_rate = 16000.0);
  static FrameSpec Rectangular(std::size_t frame_len, std::size_t hop,
                               double sample_rate = 16000.0);

  std::size_t num_bins() const { return frame_len / 2 + 1; }
  // Number of frames needed to cover `num_samples` with zero padding at the
  // tail.
  std::size_t num_frames(std::size_t num_samples) const;
  // Value of sum_k window[n + k*hop]^2, constant over n. Throws ConfigError
  // when the window violates the overlap-add condition.
  double overlap_add_gain() const;
  void Validate() const;
};

// Complex STFT tensor of shape [bins x frames x channels]. Storage is
// bin-major so that each bin is a contiguous (frames x channels) row-major
// block.
class Spectrogram {
 public:
  using BinMatrix =
      Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using BinMap = Eigen::Map<BinMatrix>;
  using ConstBinMap = Eigen::Map<const BinMatrix>;

  Spectrogram() = default;
  Spectrogram(std::size_t bins, std::size_t frames, std::size_t channels);
  Spectrogram(const FrameSpec& spec, std::size_t frames, std::size_t channels,
              std::size_t signal_length);

  std::size_t bins() const { return bins_; }
  std::size_t frames() const { return frames_; }
  std::size_t channels() const { return channels_; }

  Complex& operator()(std::size_t f, std::size_t t, std::size_t m) {
    return data_[(f * frames_ + t) * channels_ + m];
  }
  const Complex& operator()(std::size_t f, std::size_t t,
                            std::size_t m) const {
    return data_[(f * frames_ + t) * channels_ + m];
  }

  // (frames x channels) view of bin f.
  BinMap bin(std::size_t f) {
    return BinMap(data_.data() + f * frames_ * channels_, frames_, channels_);
  }
  ConstBinMap bin(std::size_t f) const {
    return ConstBinMap(data_.data() + f * frames_ * channels_, frames_,
                       channels_);
  }

  std::span<Complex> data() { return data_; }
  std::span<const Complex> data() const { return data_; }

  Spectrogram channel(std::size_t m) const;
  bool same_shape(const Spectrogram& other) const {
    return bins_ == other.bins_ && frames_ == other.frames_ &&
           channels_ == other.channels_;
  }

  Spectrogram& operator+=(const Spectrogram& other);
  Spectrogram& operator-=(const Spectrogram& other);
  Spectrogram& operator*=(Complex scale);

  FrameSpec spec;
  // Length of the time-domain signal the tensor represents; synthesis trims
  // its output to this length.
  std::size_t signal_length = 0;

 private:
  std::size_t bins_ = 0;
  std::size_t frames_ = 0;
  std::size_t channels_ = 0;
  std::vector<Complex> data_;
};

Spectrogram operator+(Spectrogram a, const Spectrogram& b);
Spectrogram operator-(Spectrogram a, const Spectrogram& b);
Spectrogram operator*(Complex scale, Spectrogram a);

// One-sided STFT of every channel. Throws ConfigError when the signal is
// shorter than one frame, channels differ in length, or the window is not
// overlap-add consistent.
Spectrogram analyze(const Audio& signal, const FrameSpec& spec);

// Weighted overlap-add inverse of analyze(). Samples covered by a complete
// set of overlapping frames are reconstructed exactly.
Audio synthesize(const Spectrogram& spec);

// Time-domain energy equivalent of the spectrogram: two-sided spectral
// energy divided by frame_len and the overlap-add gain.
double spectral_energy(const Spectrogram& spec, std::size_t channel);

// Linear convolution of x with an FIR filter, truncated to x.size() samples.
std::vector<double> fft_convolve(const std::vector<double>& x,
                                 const std::vector<double>& filter);

}  // namespace aecbse

#endif  // AECBSE_STFT_H_
