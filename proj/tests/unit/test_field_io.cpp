#include <filesystem>
#include <fstream>

#include "gbatc/field_io.hpp"
#include "helpers.hpp"

using namespace gbatc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gbatc_field_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(FieldIo, RoundTripAtFloatPrecision) {
  const FieldDataset d(FieldDims{2, 2, 3, 3}, [] {
    std::vector<double> v(36);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i) - 1.7;
    return v;
  }(), {"H2", "O2"});
  const fs::path p = scratch("rt.f32");
  write_field(p, d);
  const FieldDataset r = read_field(p);
  ASSERT_EQ(r.dims(), d.dims());
  EXPECT_EQ(r.species_names(), d.species_names());
  const FieldDataset rounded = round_to_storage(d);
  for (std::size_t i = 0; i < d.values().size(); ++i) {
    EXPECT_EQ(r.values()[i], static_cast<double>(static_cast<float>(d.values()[i])));
    EXPECT_EQ(r.values()[i], rounded.values()[i]);
  }
  EXPECT_EQ(fs::file_size(p), 36u * 4);
}

TEST(FieldIo, RemainderFlagSurvives) {
  FieldDataset d(FieldDims{1, 1, 2, 2}, std::vector<double>(4, 1.0));
  d.set_remainder_filled(true);
  const fs::path p = scratch("flag.f32");
  write_field(p, d);
  EXPECT_TRUE(read_field(p).remainder_filled());
}

TEST(FieldIo, MissingSidecarAndShortData) {
  const fs::path p = scratch("nosidecar.f32");
  fs::remove(sidecar_path(p));
  { std::ofstream(p) << "abcd"; }
  EXPECT_KIND(read_field(p), ErrorKind::kIo);

  const FieldDataset d(FieldDims{1, 1, 2, 2}, std::vector<double>(4, 1.0));
  const fs::path q = scratch("short.f32");
  write_field(q, d);
  fs::resize_file(q, 8);
  EXPECT_KIND(read_field(q), ErrorKind::kTruncation);
}

TEST(FieldIo, MalformedSidecar) {
  const FieldDataset d(FieldDims{1, 1, 2, 2}, std::vector<double>(4, 1.0));
  const fs::path p = scratch("bad.f32");
  write_field(p, d);
  { std::ofstream(sidecar_path(p)) << "gbatc-field 1\nspecies x\n"; }
  EXPECT_KIND(read_field(p), ErrorKind::kInvalidInput);
  { std::ofstream(sidecar_path(p)) << "gbatc-field 2\n"; }
  EXPECT_KIND(read_field(p), ErrorKind::kVersion);
}

TEST(FieldIo, AtomicWriteLeavesNoTemporary) {
  const fs::path p = scratch("atomic.bin");
  const std::vector<std::uint8_t> bytes{1, 2, 3};
  write_bytes_atomic(p, bytes);
  EXPECT_EQ(read_bytes(p), bytes);
  EXPECT_FALSE(fs::exists(fs::path(p.string() + ".tmp")));
  EXPECT_KIND(write_bytes_atomic(scratch("no/such/dir/x.bin"), bytes), ErrorKind::kIo);
}
