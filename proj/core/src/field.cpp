#include "gbatc/field.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gbatc/error.hpp"
#include "gbatc/rng.hpp"

namespace gbatc {
namespace {

constexpr const char* kModule = "field-core";

void check_dims(const FieldDims& dims, ErrorKind kind) {
  if (dims.species < 1 || dims.timesteps < 1 || dims.height < 1 || dims.width < 1) {
    throw Error(kind, kModule,
                "dimensions must be positive, got S=" + std::to_string(dims.species) +
                    " T=" + std::to_string(dims.timesteps) + " H=" + std::to_string(dims.height) +
                    " W=" + std::to_string(dims.width));
  }
}

}  // namespace

FieldDataset::FieldDataset(FieldDims dims, std::vector<double> values,
                           std::vector<std::string> species_names)
    : dims_(dims), values_(std::move(values)), names_(std::move(species_names)) {
  check_dims(dims_, ErrorKind::kInvalidInput);
  if (values_.size() != dims_.size()) {
    throw Error(ErrorKind::kInvalidInput, kModule,
                "expected " + std::to_string(dims_.size()) + " values, got " +
                    std::to_string(values_.size()));
  }
  if (names_.empty()) names_ = default_species_names(dims_.species);
  if (names_.size() != static_cast<std::size_t>(dims_.species)) {
    throw Error(ErrorKind::kInvalidInput, kModule, "species name count does not match S");
  }
  ranges_.resize(static_cast<std::size_t>(dims_.species));
  for (int s = 0; s < dims_.species; ++s) {
    const auto slice = species(s);
    SpeciesRange r{slice[0], slice[0]};
    for (std::size_t i = 0; i < slice.size(); ++i) {
      const double v = slice[i];
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::kInvalidInput, kModule,
                    "non-finite value in species " + std::to_string(s) + " at offset " +
                        std::to_string(i));
      }
      r.min = std::min(r.min, v);
      r.max = std::max(r.max, v);
    }
    ranges_[static_cast<std::size_t>(s)] = r;
  }
}

std::span<const double> FieldDataset::species(int s) const {
  return std::span<const double>(values_).subspan(static_cast<std::size_t>(s) * dims_.species_size(),
                                                  dims_.species_size());
}

std::span<const double> FieldDataset::frame(int s, int t) const {
  return std::span<const double>(values_).subspan(offset(s, t, 0, 0), dims_.frame_size());
}

std::vector<std::string> default_species_names(int species) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(std::max(species, 0)));
  for (int s = 0; s < species; ++s) names.push_back("species_" + std::to_string(s));
  return names;
}

void validate_geometry(const FieldDims& dims, const BlockGeometry& geom) {
  if (geom.timesteps < 1 || geom.rows < 1 || geom.cols < 1) {
    throw Error(ErrorKind::kInvalidGeometry, kModule, "block dimensions must be positive");
  }
  if (geom.timesteps > dims.timesteps || geom.rows > dims.height || geom.cols > dims.width) {
    throw Error(ErrorKind::kInvalidGeometry, kModule,
                "block " + std::to_string(geom.timesteps) + "x" + std::to_string(geom.rows) + "x" +
                    std::to_string(geom.cols) + " exceeds dataset " +
                    std::to_string(dims.timesteps) + "x" + std::to_string(dims.height) + "x" +
                    std::to_string(dims.width));
  }
}

BlockIndex BlockGrid::at(std::size_t linear_index) const {
  BlockIndex b;
  b.col = static_cast<int>(linear_index % static_cast<std::size_t>(col_blocks));
  linear_index /= static_cast<std::size_t>(col_blocks);
  b.row = static_cast<int>(linear_index % static_cast<std::size_t>(row_blocks));
  b.t = static_cast<int>(linear_index / static_cast<std::size_t>(row_blocks));
  return b;
}

BlockGrid block_grid(const FieldDims& dims, const BlockGeometry& geom) {
  validate_geometry(dims, geom);
  if (geom.remainder == RemainderPolicy::kDrop) {
    return {dims.timesteps / geom.timesteps, dims.height / geom.rows, dims.width / geom.cols};
  }
  auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
  return {ceil_div(dims.timesteps, geom.timesteps), ceil_div(dims.height, geom.rows),
          ceil_div(dims.width, geom.cols)};
}

std::vector<BlockInstance> partition(const FieldDataset& dataset, const BlockGeometry& geom) {
  const FieldDims& dims = dataset.dims();
  const BlockGrid grid = block_grid(dims, geom);
  const std::size_t d = geom.block_size();

  std::vector<BlockInstance> blocks;
  blocks.reserve(grid.count());
  for (std::size_t n = 0; n < grid.count(); ++n) {
    BlockInstance block;
    block.index = grid.at(n);
    block.species = dims.species;
    block.geometry = geom;
    block.values.resize(d * static_cast<std::size_t>(dims.species));
    std::size_t out = 0;
    for (int s = 0; s < dims.species; ++s) {
      for (int k = 0; k < geom.timesteps; ++k) {
        // Clamping only matters under pad-replicate; drop never leaves the domain.
        const int t = std::min(block.index.t * geom.timesteps + k, dims.timesteps - 1);
        for (int a = 0; a < geom.rows; ++a) {
          const int i = std::min(block.index.row * geom.rows + a, dims.height - 1);
          for (int b = 0; b < geom.cols; ++b) {
            const int j = std::min(block.index.col * geom.cols + b, dims.width - 1);
            block.values[out++] = dataset.at(s, t, i, j);
          }
        }
      }
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

FieldDataset reassemble(std::span<const BlockInstance> blocks, const BlockGeometry& geom,
                        const FieldDims& dims, std::vector<std::string> species_names) {
  const BlockGrid grid = block_grid(dims, geom);
  std::vector<const BlockInstance*> slots(grid.count(), nullptr);
  for (const BlockInstance& block : blocks) {
    const BlockIndex& b = block.index;
    if (b.t < 0 || b.row < 0 || b.col < 0 || b.t >= grid.t_blocks || b.row >= grid.row_blocks ||
        b.col >= grid.col_blocks) {
      throw Error(ErrorKind::kCoverage, kModule,
                  "block index (" + std::to_string(b.t) + "," + std::to_string(b.row) + "," +
                      std::to_string(b.col) + ") outside grid");
    }
    if (block.species != dims.species || !(block.geometry.timesteps == geom.timesteps &&
                                           block.geometry.rows == geom.rows &&
                                           block.geometry.cols == geom.cols) ||
        block.values.size() != geom.block_size() * static_cast<std::size_t>(dims.species)) {
      throw Error(ErrorKind::kShape, kModule, "block shape does not match geometry");
    }
    const BlockInstance*& slot = slots[grid.linear(b)];
    if (slot != nullptr) {
      throw Error(ErrorKind::kCoverage, kModule,
                  "duplicate block (" + std::to_string(b.t) + "," + std::to_string(b.row) + "," +
                      std::to_string(b.col) + ")");
    }
    slot = &block;
  }
  for (std::size_t n = 0; n < slots.size(); ++n) {
    if (slots[n] == nullptr) {
      const BlockIndex b = grid.at(n);
      throw Error(ErrorKind::kCoverage, kModule,
                  "missing block (" + std::to_string(b.t) + "," + std::to_string(b.row) + "," +
                      std::to_string(b.col) + ")");
    }
  }

  const int covered_t = std::min(grid.t_blocks * geom.timesteps, dims.timesteps);
  const int covered_h = std::min(grid.row_blocks * geom.rows, dims.height);
  const int covered_w = std::min(grid.col_blocks * geom.cols, dims.width);
  const bool filled =
      covered_t < dims.timesteps || covered_h < dims.height || covered_w < dims.width;

  std::vector<double> values(dims.size());
  const std::size_t d = geom.block_size();
  for (int s = 0; s < dims.species; ++s) {
    for (int t = 0; t < dims.timesteps; ++t) {
      const int tc = std::min(t, covered_t - 1);
      for (int i = 0; i < dims.height; ++i) {
        const int ic = std::min(i, covered_h - 1);
        for (int j = 0; j < dims.width; ++j) {
          const int jc = std::min(j, covered_w - 1);
          const BlockIndex b{tc / geom.timesteps, ic / geom.rows, jc / geom.cols};
          const BlockInstance& block = *slots[grid.linear(b)];
          const std::size_t local =
              (static_cast<std::size_t>(tc % geom.timesteps) * geom.rows + ic % geom.rows) *
                  geom.cols +
              jc % geom.cols;
          values[((static_cast<std::size_t>(s) * dims.timesteps + t) * dims.height + i) *
                     dims.width +
                 j] = block.values[static_cast<std::size_t>(s) * d + local];
        }
      }
    }
  }
  FieldDataset out(dims, std::move(values), std::move(species_names));
  out.set_remainder_filled(filled);
  return out;
}

namespace {

struct Kernel {
  double amplitude, growth, ci, cj, vi, vj, sigma;
};

FieldDataset synthesize_low_rank(const SynthSpec& spec, Rng& rng) {
  const FieldDims& dims = spec.dims;
  const int modes = spec.low_rank_fields;
  struct Mode {
    double a, b, c;
  };
  std::vector<Mode> rates(static_cast<std::size_t>(modes));
  for (Mode& m : rates) m = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
  std::vector<double> weights(static_cast<std::size_t>(dims.species * modes));
  for (double& w : weights) {
    w = rng.uniform(0.3, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  }

  std::vector<double> values(dims.size());
  std::vector<double> field(static_cast<std::size_t>(modes));
  for (int t = 0; t < dims.timesteps; ++t) {
    for (int i = 0; i < dims.height; ++i) {
      for (int j = 0; j < dims.width; ++j) {
        for (int m = 0; m < modes; ++m) {
          const Mode& r = rates[static_cast<std::size_t>(m)];
          field[static_cast<std::size_t>(m)] =
              std::exp(r.a * t / dims.timesteps + r.b * i / dims.height + r.c * j / dims.width);
        }
        for (int s = 0; s < dims.species; ++s) {
          double v = 0.0;
          for (int m = 0; m < modes; ++m) {
            v += weights[static_cast<std::size_t>(s * modes + m)] * field[static_cast<std::size_t>(m)];
          }
          values[((static_cast<std::size_t>(s) * dims.timesteps + t) * dims.height + i) *
                     dims.width +
                 j] = v;
        }
      }
    }
  }
  return FieldDataset(dims, std::move(values));
}

}  // namespace

FieldDataset synthesize(const SynthSpec& spec, std::uint64_t seed) {
  const FieldDims& dims = spec.dims;
  check_dims(dims, ErrorKind::kInvalidSpec);
  if (spec.kernels < 0 || spec.low_rank_fields < 0) {
    throw Error(ErrorKind::kInvalidSpec, kModule, "kernel and mode counts must be non-negative");
  }
  if (!spec.exponents.empty() && spec.exponents.size() != static_cast<std::size_t>(dims.species)) {
    throw Error(ErrorKind::kInvalidSpec, kModule, "one exponent per species required");
  }
  if (!spec.amplitudes.empty() &&
      spec.amplitudes.size() != static_cast<std::size_t>(dims.species)) {
    throw Error(ErrorKind::kInvalidSpec, kModule, "one amplitude per species required");
  }
  if (!(spec.width_min > 0.0) || spec.width_max < spec.width_min) {
    throw Error(ErrorKind::kInvalidSpec, kModule, "kernel width range is invalid");
  }

  Rng rng(seed);
  if (spec.low_rank_fields > 0) return synthesize_low_rank(spec, rng);

  const double extent = std::min(dims.height, dims.width);
  std::vector<Kernel> kernels(static_cast<std::size_t>(spec.kernels));
  for (Kernel& k : kernels) {
    k.amplitude = rng.uniform(0.4, 1.0);
    k.growth = rng.uniform(-spec.growth_scale, spec.growth_scale);
    k.ci = rng.uniform(0.0, dims.height);
    k.cj = rng.uniform(0.0, dims.width);
    k.vi = rng.uniform(-spec.drift_scale, spec.drift_scale);
    k.vj = rng.uniform(-spec.drift_scale, spec.drift_scale);
    k.sigma = rng.uniform(spec.width_min, spec.width_max) * extent;
  }

  std::vector<double> alpha = spec.exponents;
  std::vector<double> amp = spec.amplitudes;
  if (alpha.empty()) {
    alpha.resize(static_cast<std::size_t>(dims.species));
    for (double& a : alpha) a = rng.uniform(0.3, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  }
  if (amp.empty()) {
    amp.resize(static_cast<std::size_t>(dims.species));
    for (double& a : amp) a = rng.uniform(0.5, 2.0);
  }

  std::vector<double> base(static_cast<std::size_t>(dims.timesteps) * dims.frame_size(), 0.0);
  for (int t = 0; t < dims.timesteps; ++t) {
    for (const Kernel& k : kernels) {
      const double a = k.amplitude * std::exp(k.growth * t);
      const double ci = k.ci + k.vi * t;
      const double cj = k.cj + k.vj * t;
      const double inv = 1.0 / (2.0 * k.sigma * k.sigma);
      for (int i = 0; i < dims.height; ++i) {
        const double di = (i - ci) * (i - ci);
        for (int j = 0; j < dims.width; ++j) {
          const double dj = (j - cj) * (j - cj);
          base[(static_cast<std::size_t>(t) * dims.height + i) * dims.width + j] +=
              a * std::exp(-(di + dj) * inv);
        }
      }
    }
  }

  std::vector<double> values(dims.size());
  for (int s = 0; s < dims.species; ++s) {
    const double al = alpha[static_cast<std::size_t>(s)];
    const double am = amp[static_cast<std::size_t>(s)];
    double* out = values.data() + static_cast<std::size_t>(s) * dims.species_size();
    for (std::size_t n = 0; n < base.size(); ++n) {
      out[n] = al == 0.0 ? am * base[n] : am * std::expm1(al * base[n]) / al;
    }
  }
  return FieldDataset(dims, std::move(values));
}

}  // namespace gbatc
