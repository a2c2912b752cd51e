#include "aecbse/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "aecbse/error.h"

namespace aecbse {
namespace {

Spectrogram single_channel_like(const Spectrogram& like) {
  Spectrogram out(like.bins(), like.frames(), 1);
  out.spec = like.spec;
  out.signal_length = like.signal_length;
  return out;
}

// (reference channel of c - h u [if echo], scale * w^H (c - h u)).
std::pair<Spectrogram, Spectrogram> pass_one(
    const Spectrogram& c, const Spectrogram* u, const DemixState& state,
    const std::vector<Complex>& scale, std::size_t reference) {
  Spectrogram aec = single_channel_like(c);
  Spectrogram bse = single_channel_like(c);
  for (std::size_t f = 0; f < c.bins(); ++f) {
    const BinState& bin = state.bins[f];
    Spectrogram::BinMatrix e = c.bin(f);
    if (u != nullptr) e -= u->bin(f) * bin.h.transpose();
    aec.bin(f).col(0) = e.col(reference);
    bse.bin(f).col(0) = scale[f] * (e * bin.w.conjugate());
  }
  return {std::move(aec), std::move(bse)};
}

std::string format_row(const MetricsReport& r, const std::string& seed) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%.4f,%.4f,%.4f,%.4f,%.4f",
                r.algorithm.c_str(), seed.c_str(), r.sir_db, r.ser_db,
                r.sier_db, r.erle_aec_db, r.erle_bf_db);
  return buf;
}

}  // namespace

Spectrogram StageOutputs::sum() const {
  return soi + echo + interference + noise;
}

ComponentPass component_pass(const DemixState& state,
                             const std::vector<Complex>& output_scale,
                             const SceneImages& images, const Spectrogram& u,
                             std::size_t reference) {
  if (output_scale.size() != state.num_bins())
    throw ConfigError("output scale must have one entry per bin");
  for (const Spectrogram* img :
       {&images.soi, &images.echo, &images.interference, &images.noise}) {
    if (img->channels() != state.mics || img->bins() != state.num_bins())
      throw ConfigError("component image does not match the demixing state");
  }
  ComponentPass out;
  auto [soi_a, soi_b] = pass_one(images.soi, nullptr, state, output_scale, reference);
  auto [echo_a, echo_b] = pass_one(images.echo, &u, state, output_scale, reference);
  auto [intf_a, intf_b] =
      pass_one(images.interference, nullptr, state, output_scale, reference);
  auto [noise_a, noise_b] =
      pass_one(images.noise, nullptr, state, output_scale, reference);
  out.aec = {std::move(soi_a), std::move(echo_a), std::move(intf_a),
             std::move(noise_a)};
  out.bse = {std::move(soi_b), std::move(echo_b), std::move(intf_b),
             std::move(noise_b)};
  return out;
}

double interior_power(const std::vector<double>& x, std::size_t edge) {
  std::size_t begin = 0, end = x.size();
  if (x.size() > 4 * edge) {
    begin = edge;
    end = x.size() - edge;
  }
  double p = 0.0;
  for (std::size_t i = begin; i < end; ++i) p += x[i] * x[i];
  return p;
}

double capped_db(double num, double den) {
  if (!(den > 0.0)) return num > 0.0 ? kRatioCapDb : 0.0;
  if (!(num > 0.0)) return -kRatioCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kRatioCapDb, kRatioCapDb);
}

double erle(const std::vector<double>& echo_image,
            const std::vector<double>& echo_residual, std::size_t edge) {
  return capped_db(interior_power(echo_image, edge),
                   interior_power(echo_residual, edge));
}

Ratios ratios(const std::vector<double>& soi, const std::vector<double>& echo,
              const std::vector<double>& interference,
              const std::vector<double>& noise, std::size_t edge) {
  const double ps = interior_power(soi, edge);
  const double pe = interior_power(echo, edge);
  const double pi = interior_power(interference, edge);
  const double pn = interior_power(noise, edge);
  return {capped_db(ps, pi), capped_db(ps, pe), capped_db(ps, pi + pe + pn)};
}

MetricsReport evaluate(const Scene& scene, const DemixState& state,
                       const std::vector<Complex>& output_scale,
                       std::size_t reference) {
  const ComponentPass pass =
      component_pass(state, output_scale, scene.images, scene.u, reference);
  const std::size_t edge = scene.x.spec.frame_len;
  const auto td = [](const Spectrogram& s) {
    return synthesize(s).channels[0];
  };
  const std::vector<double> echo_in = td(scene.images.echo.channel(reference));
  const Ratios r = ratios(td(pass.bse.soi), td(pass.bse.echo),
                          td(pass.bse.interference), td(pass.bse.noise), edge);
  MetricsReport report;
  report.sir_db = r.sir_db;
  report.ser_db = r.ser_db;
  report.sier_db = r.sier_db;
  report.erle_aec_db = erle(echo_in, td(pass.aec.echo), edge);
  report.erle_bf_db = erle(echo_in, td(pass.bse.echo), edge);
  report.seed = scene.cfg.seed;
  return report;
}

MetricsReport evaluate_unprocessed(const Scene& scene, std::size_t reference) {
  const std::size_t edge = scene.x.spec.frame_len;
  const auto td = [reference](const Spectrogram& s) {
    return synthesize(s.channel(reference)).channels[0];
  };
  const std::vector<double> echo_in = td(scene.images.echo);
  const Ratios r = ratios(td(scene.images.soi), echo_in,
                          td(scene.images.interference),
                          td(scene.images.noise), edge);
  MetricsReport report;
  report.algorithm = "none";
  report.seed = scene.cfg.seed;
  report.sir_db = r.sir_db;
  report.ser_db = r.ser_db;
  report.sier_db = r.sier_db;
  report.erle_aec_db = erle(echo_in, echo_in, edge);
  report.erle_bf_db = report.erle_aec_db;
  return report;
}

MetricsReport mean_report(const std::vector<MetricsReport>& reports) {
  MetricsReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.sir_db += r.sir_db;
    m.ser_db += r.ser_db;
    m.sier_db += r.sier_db;
    m.erle_aec_db += r.erle_aec_db;
    m.erle_bf_db += r.erle_bf_db;
  }
  const double n = static_cast<double>(reports.size());
  m.sir_db /= n;
  m.ser_db /= n;
  m.sier_db /= n;
  m.erle_aec_db /= n;
  m.erle_bf_db /= n;
  m.algorithm = reports.front().algorithm;
  m.iterations = reports.front().iterations;
  return m;
}

void write_metrics_csv(std::ostream& out,
                       const std::vector<MetricsReport>& rows) {
  out << "algorithm,seed,SIR,SER,SIER,ERLE_aec,ERLE_bf\n";
  std::vector<std::string> order;
  std::map<std::string, std::vector<MetricsReport>> groups;
  for (const auto& r : rows) {
    out << format_row(r, std::to_string(r.seed)) << "\n";
    if (groups.find(r.algorithm) == groups.end()) order.push_back(r.algorithm);
    groups[r.algorithm].push_back(r);
  }
  for (const auto& name : order)
    out << format_row(mean_report(groups[name]), "mean") << "\n";
}

}  // namespace aecbse
