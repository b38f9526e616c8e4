#include "gbatc/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

#include "gbatc/error.hpp"

namespace gbatc {
namespace {

constexpr const char* kModule = "metrics";

void require_same(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorKind::kShape, kModule, "inputs differ in length");
}

void require_same(const FieldDataset& a, const FieldDataset& b) {
  if (!(a.dims() == b.dims())) throw Error(ErrorKind::kShape, kModule, "datasets differ in shape");
}

double rmse(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size());
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(a.size()));
}

// Valid-mode separable filter of an H x W frame with the given taps.
std::vector<double> filter2(std::span<const double> f, int h, int w, std::span<const double> taps) {
  const int n = static_cast<int>(taps.size());
  const int oh = h - n + 1;
  const int ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += taps[k] * f[static_cast<std::size_t>(i) * w + j + k];
      rows[static_cast<std::size_t>(i) * ow + j] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += taps[k] * rows[static_cast<std::size_t>(i + k) * ow + j];
      out[static_cast<std::size_t>(i) * ow + j] = acc;
    }
  }
  return out;
}

std::pair<double, double> channel_range(const FieldDataset& d, int channel) {
  const SpeciesRange& r = d.range(channel);
  return {r.min, r.span() > 0.0 ? r.span() : 1.0};
}

}  // namespace

double nrmse(std::span<const double> original, std::span<const double> reconstructed, double range) {
  const double e = rmse(original, reconstructed);
  if (range > 0.0) return e / range;
  if (e == 0.0) return 0.0;
  spdlog::warn("nrmse: zero data range with nonzero error; result undefined");
  return std::numeric_limits<double>::quiet_NaN();
}

double nrmse(const FieldDataset& original, const FieldDataset& reconstructed, int species) {
  require_same(original, reconstructed);
  return nrmse(original.species(species), reconstructed.species(species), original.range(species).span());
}

double mean_nrmse(const FieldDataset& original, const FieldDataset& reconstructed) {
  require_same(original, reconstructed);
  const int s_count = original.dims().species;
  if (s_count == 0) return 0.0;
  double sum = 0.0;
  for (int s = 0; s < s_count; ++s) sum += nrmse(original, reconstructed, s);
  return sum / s_count;
}

double psnr(std::span<const double> original, std::span<const double> reconstructed, double range) {
  const double e = rmse(original, reconstructed);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  if (!(range > 0.0)) {
    spdlog::warn("psnr: zero data range with nonzero error; result undefined");
    return std::numeric_limits<double>::quiet_NaN();
  }
  return 20.0 * std::log10(range / e);
}

std::vector<double> gaussian_taps(int window, double sigma) {
  if (window < 1 || !(sigma > 0.0)) {
    throw Error(ErrorKind::kInvalidSpec, kModule, "gaussian window must be positive");
  }
  std::vector<double> taps(static_cast<std::size_t>(window));
  const double centre = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double x = i - centre;
    taps[static_cast<std::size_t>(i)] = std::exp(-(x * x) / (2.0 * sigma * sigma));
    sum += taps[static_cast<std::size_t>(i)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

double ssim(std::span<const double> a, std::span<const double> b, int height, int width,
            double range, const SsimParams& params) {
  require_same(a.size(), b.size());
  if (a.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw Error(ErrorKind::kShape, kModule, "frame length does not match height x width");
  }
  if (height < params.window || width < params.window) {
    throw Error(ErrorKind::kInvalidInput, kModule,
                "frame " + std::to_string(height) + "x" + std::to_string(width) +
                    " smaller than the " + std::to_string(params.window) + "x" +
                    std::to_string(params.window) + " SSIM window");
  }
  const double l = range > 0.0 ? range : 1.0;
  const double c1 = (params.k1 * l) * (params.k1 * l);
  const double c2 = (params.k2 * l) * (params.k2 * l);
  const std::vector<double> taps = gaussian_taps(params.window, params.sigma);

  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter2(a, height, width, taps);
  const auto mu_b = filter2(b, height, width, taps);
  const auto e_aa = filter2(aa, height, width, taps);
  const auto e_bb = filter2(bb, height, width, taps);
  const auto e_ab = filter2(ab, height, width, taps);

  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    const double num = (2.0 * (ma * mb) + c1) * (2.0 * cov + c2);
    const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
    sum += num / den;
  }
  return sum / static_cast<double>(mu_a.size());
}

// -- QoI ------------------------------------------------------------------------

std::vector<double> qoi_rates(std::span<const double> point, const QoiSpec& spec,
                              std::uint64_t* clamped) {
  if (spec.temperature_channel < 0 || static_cast<std::size_t>(spec.temperature_channel) >= point.size()) {
    throw Error(ErrorKind::kInvalidSpec, kModule, "temperature channel out of range");
  }
  std::vector<double> out(spec.outputs.size(), 0.0);
  const double u = spec.offset + spec.scale * point[static_cast<std::size_t>(spec.temperature_channel)];
  if (!(u > 0.0)) {
    if (clamped != nullptr) *clamped += out.size();
    return out;
  }
  for (std::size_t o = 0; o < spec.outputs.size(); ++o) {
    const QoiOutput& q = spec.outputs[o];
    double rate = q.a * std::pow(u, q.b) * std::exp(-q.e / u);
    for (std::size_t j = 0; j < q.nu.size() && j < point.size(); ++j) {
      const double nu = q.nu[j];
      if (nu == 0.0) continue;
      double x = point[j];
      if (x < 0.0 && nu != std::floor(nu)) {
        if (clamped != nullptr) ++*clamped;
        x = 0.0;
      }
      rate *= std::pow(x, nu);
    }
    out[o] = rate;
  }
  return out;
}

FieldDataset qoi_field(const FieldDataset& dataset, const QoiSpec& spec, std::uint64_t* clamped) {
  const FieldDims& d = dataset.dims();
  if (spec.outputs.empty()) throw Error(ErrorKind::kInvalidSpec, kModule, "QoI spec has no outputs");
  FieldDims od{static_cast<int>(spec.outputs.size()), d.timesteps, d.height, d.width};
  std::vector<double> values(od.size());
  const std::size_t n = d.species_size();
  std::vector<double> point(static_cast<std::size_t>(d.species));
  for (std::size_t p = 0; p < n; ++p) {
    for (int s = 0; s < d.species; ++s) point[static_cast<std::size_t>(s)] = dataset.values()[s * n + p];
    const auto r = qoi_rates(point, spec, clamped);
    for (std::size_t o = 0; o < r.size(); ++o) values[o * n + p] = r[o];
  }
  std::vector<std::string> names;
  for (std::size_t o = 0; o < spec.outputs.size(); ++o) names.push_back("rate" + std::to_string(o));
  return FieldDataset(od, std::move(values), std::move(names));
}

namespace {

// u runs from 2 where the surrogate channel is at its minimum down to 1 at its
// maximum: the channel acts as a reactant, depleted where the mixture is hot.
QoiSpec arrhenius_preset(const FieldDataset& reference, int temperature_channel, std::string name,
                         double activation) {
  const auto [lo, span] = channel_range(reference, temperature_channel);
  QoiSpec spec{std::move(name), temperature_channel, 2.0 + lo / span, -1.0 / span, {}};
  const int s_count = reference.dims().species;
  for (int s = 0; s < s_count; ++s) {
    QoiOutput q{1.0, 0.0, activation, std::vector<double>(static_cast<std::size_t>(s_count), 0.0)};
    q.nu[static_cast<std::size_t>(s)] = 1.0;
    spec.outputs.push_back(std::move(q));
  }
  return spec;
}

}  // namespace

QoiSpec qoi_minor_like(const FieldDataset& reference, int temperature_channel) {
  return arrhenius_preset(reference, temperature_channel, "minor_like", 24.0);
}

QoiSpec qoi_major_like(const FieldDataset& reference, int temperature_channel) {
  return arrhenius_preset(reference, temperature_channel, "major_like", 1.0);
}

std::vector<SpeciesStatistic> species_statistics(const FieldDataset& dataset) {
  const FieldDims& d = dataset.dims();
  std::vector<SpeciesStatistic> out;
  const double n = static_cast<double>(d.frame_size());
  for (int s = 0; s < d.species; ++s) {
    for (int t = 0; t < d.timesteps; ++t) {
      const auto f = dataset.frame(s, t);
      double mean = 0.0;
      for (double v : f) mean += v;
      mean /= n;
      double var = 0.0;
      for (double v : f) var += (v - mean) * (v - mean);
      out.push_back({s, t, mean, std::sqrt(var / n)});
    }
  }
  return out;
}

FidelityReport fidelity_report(const FieldDataset& original, const FieldDataset& reconstructed,
                               const QoiSpec* qoi) {
  require_same(original, reconstructed);
  const FieldDims& d = original.dims();
  FidelityReport r;
  r.species_names = original.species_names();
  const bool frames_fit = d.height >= r.ssim_params.window && d.width >= r.ssim_params.window;
  for (int s = 0; s < d.species; ++s) {
    const double range = original.range(s).span();
    r.nrmse.push_back(nrmse(original, reconstructed, s));
    std::vector<double> p, q;
    for (int t = 0; t < d.timesteps; ++t) {
      p.push_back(psnr(original.frame(s, t), reconstructed.frame(s, t), range));
      if (frames_fit) q.push_back(ssim(original.frame(s, t), reconstructed.frame(s, t), d.height, d.width, range, r.ssim_params));
    }
    r.psnr.push_back(std::move(p));
    r.ssim.push_back(std::move(q));
  }
  r.mean_nrmse = mean_nrmse(original, reconstructed);
  if (qoi != nullptr) {
    std::uint64_t clamped = 0;
    const FieldDataset a = qoi_field(original, *qoi, &clamped);
    const FieldDataset b = qoi_field(reconstructed, *qoi, &clamped);
    std::vector<double> v;
    for (int o = 0; o < a.dims().species; ++o) v.push_back(nrmse(a, b, o));
    r.qoi_mean_nrmse = mean_nrmse(a, b);
    r.qoi_nrmse = std::move(v);
    r.qoi_clamped = clamped;
    if (clamped > 0) spdlog::warn("qoi: clamped {} negative or non-positive bases", clamped);
  }
  return r;
}

namespace {

template <typename Emit>
void for_each_entry(const FidelityReport& r, Emit&& emit) {
  for (std::size_t s = 0; s < r.nrmse.size(); ++s) {
    const std::string& name = r.species_names[s];
    emit(name, "nrmse", r.nrmse[s], -1);
    for (std::size_t t = 0; t < r.psnr[s].size(); ++t) emit(name, "psnr", r.psnr[s][t], static_cast<int>(t));
    for (std::size_t t = 0; t < r.ssim[s].size(); ++t) emit(name, "ssim", r.ssim[s][t], static_cast<int>(t));
    if (r.qoi_nrmse && s < r.qoi_nrmse->size()) emit(name, "qoi_nrmse", (*r.qoi_nrmse)[s], -1);
  }
  emit("all", "mean_nrmse", r.mean_nrmse, -1);
  if (r.qoi_mean_nrmse) emit("all", "qoi_mean_nrmse", *r.qoi_mean_nrmse, -1);
}

}  // namespace

void write_jsonl(std::ostream& out, const FidelityReport& report) {
  for_each_entry(report, [&](const std::string& species, const char* metric, double value, int t) {
    nlohmann::json j{{"species", species}, {"metric", metric}};
    // JSON has no infinity; identical frames are reported as the string "inf".
    if (std::isfinite(value)) {
      j["value"] = value;
    } else {
      j["value"] = std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
    }
    if (t >= 0) j["timestep"] = t;
    out << j.dump() << '\n';
  });
}

void write_csv(std::ostream& out, const FidelityReport& report) {
  out << "species,metric,value,timestep\n";
  for_each_entry(report, [&](const std::string& species, const char* metric, double value, int t) {
    out << species << ',' << metric << ',' << fmt::format("{:.17g}", value) << ',';
    if (t >= 0) out << t;
    out << '\n';
  });
}

void write_statistics_csv(std::ostream& out, const FieldDataset& dataset,
                          std::span<const SpeciesStatistic> stats) {
  out << "species,metric,value,timestep\n";
  for (const SpeciesStatistic& s : stats) {
    const std::string& name = dataset.species_names()[static_cast<std::size_t>(s.species)];
    out << name << ",mean," << fmt::format("{:.17g}", s.mean) << ',' << s.timestep << '\n';
    out << name << ",std," << fmt::format("{:.17g}", s.stddev) << ',' << s.timestep << '\n';
  }
}

}  // namespace gbatc
