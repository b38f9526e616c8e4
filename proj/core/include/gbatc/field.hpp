#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gbatc {

struct FieldDims {
  int species = 0;
  int timesteps = 0;
  int height = 0;
  int width = 0;

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t species_size() const { return frame_size() * timesteps; }
  std::size_t size() const { return species_size() * species; }

  friend bool operator==(const FieldDims&, const FieldDims&) = default;
};

struct SpeciesRange {
  double min = 0.0;
  double max = 0.0;
  double span() const { return max - min; }
};

// S species x T timesteps x H x W scalars, stored species-major then
// time-major, row-major within a frame. Values are validated finite on
// construction and a per-species range is cached.
class FieldDataset {
 public:
  FieldDataset() = default;
  FieldDataset(FieldDims dims, std::vector<double> values,
               std::vector<std::string> species_names = {});

  const FieldDims& dims() const { return dims_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> species(int s) const;
  std::span<const double> frame(int s, int t) const;
  const std::vector<std::string>& species_names() const { return names_; }
  const SpeciesRange& range(int s) const { return ranges_.at(static_cast<std::size_t>(s)); }
  const std::vector<SpeciesRange>& ranges() const { return ranges_; }

  std::size_t offset(int s, int t, int i, int j) const {
    return ((static_cast<std::size_t>(s) * dims_.timesteps + t) * dims_.height + i) * dims_.width + j;
  }
  double at(int s, int t, int i, int j) const { return values_[offset(s, t, i, j)]; }

  // Set by reassemble when cells outside the tiled region had to be
  // extrapolated from the nearest covered cell.
  bool remainder_filled() const { return remainder_filled_; }
  void set_remainder_filled(bool filled) { remainder_filled_ = filled; }

 private:
  FieldDims dims_;
  std::vector<double> values_;
  std::vector<std::string> names_;
  std::vector<SpeciesRange> ranges_;
  bool remainder_filled_ = false;
};

std::vector<std::string> default_species_names(int species);

enum class RemainderPolicy : std::uint8_t { kDrop = 0, kPadReplicate = 1 };

struct BlockGeometry {
  int timesteps = 5;  // K
  int rows = 4;       // N1
  int cols = 4;       // N2
  RemainderPolicy remainder = RemainderPolicy::kDrop;

  // D = K * N1 * N2, the length of one species slice of a block.
  std::size_t block_size() const { return static_cast<std::size_t>(timesteps) * rows * cols; }

  friend bool operator==(const BlockGeometry&, const BlockGeometry&) = default;
};

// Throws ErrorKind::kInvalidGeometry if the geometry does not fit the dims.
void validate_geometry(const FieldDims& dims, const BlockGeometry& geom);

struct BlockIndex {
  int t = 0;
  int row = 0;
  int col = 0;

  friend auto operator<=>(const BlockIndex&, const BlockIndex&) = default;
};

struct BlockGrid {
  int t_blocks = 0;
  int row_blocks = 0;
  int col_blocks = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(t_blocks) * row_blocks * col_blocks;
  }
  std::size_t linear(const BlockIndex& b) const {
    return (static_cast<std::size_t>(b.t) * row_blocks + b.row) * col_blocks + b.col;
  }
  BlockIndex at(std::size_t linear_index) const;
};

BlockGrid block_grid(const FieldDims& dims, const BlockGeometry& geom);

// One spatiotemporal tile spanning all species: S x K x N1 x N2 values with
// each species slice contiguous.
struct BlockInstance {
  BlockIndex index;
  int species = 0;
  BlockGeometry geometry;
  std::vector<double> values;

  std::span<const double> species_slice(int s) const {
    const std::size_t d = geometry.block_size();
    return std::span<const double>(values).subspan(static_cast<std::size_t>(s) * d, d);
  }
  std::span<double> species_slice(int s) {
    const std::size_t d = geometry.block_size();
    return std::span<double>(values).subspan(static_cast<std::size_t>(s) * d, d);
  }
};

// Row-major over (t-block, row-block, col-block).
std::vector<BlockInstance> partition(const FieldDataset& dataset, const BlockGeometry& geom);

// Inverse of partition. Every grid position must appear exactly once. With the
// drop policy, cells outside the tiled region are copied from the nearest
// covered cell and the result is flagged via remainder_filled().
FieldDataset reassemble(std::span<const BlockInstance> blocks, const BlockGeometry& geom,
                        const FieldDims& dims, std::vector<std::string> species_names = {});

struct SynthSpec {
  FieldDims dims;
  int kernels = 6;
  // Kernel centres drift by up to this many cells per timestep in each axis.
  double drift_scale = 0.6;
  double width_min = 0.12;  // kernel sigma as a fraction of min(H, W)
  double width_max = 0.25;
  double growth_scale = 0.05;  // per-timestep log amplitude change
  // alpha_s in a_s * (exp(alpha_s * base) - 1). Empty: drawn from the seed.
  std::vector<double> exponents;
  std::vector<double> amplitudes;
  // When > 0, species are instead random linear combinations of this many
  // separable exponential modes exp(a t + b i + c j); every species block
  // then lies in a subspace of at most this dimension.
  int low_rank_fields = 0;
};

FieldDataset synthesize(const SynthSpec& spec, std::uint64_t seed);

}  // namespace gbatc
