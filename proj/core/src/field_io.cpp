#include "gbatc/field_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gbatc/error.hpp"

namespace gbatc {
namespace {

constexpr const char* kModule = "field-io";

static_assert(std::endian::native == std::endian::little,
              "raw field I/O assumes a little-endian host");

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& data_path) {
  std::filesystem::path p = data_path;
  p += ".hdr";
  return p;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, kModule, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw Error(ErrorKind::kIo, kModule, "short read on " + path.string());
  }
  return bytes;
}

void write_bytes_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, kModule, "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error(ErrorKind::kIo, kModule, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorKind::kIo, kModule, "rename to " + path.string() + " failed: " + ec.message());
  }
}

FieldDataset read_field(const std::filesystem::path& data_path) {
  std::ifstream hdr(sidecar_path(data_path));
  if (!hdr) throw Error(ErrorKind::kIo, kModule, "missing sidecar " + sidecar_path(data_path).string());

  FieldDims dims;
  std::vector<std::string> names;
  bool filled = false;
  std::string line;
  bool magic = false;
  while (std::getline(hdr, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "gbatc-field") {
      int version = 0;
      ls >> version;
      if (version != 1) throw Error(ErrorKind::kVersion, kModule, "unsupported sidecar version");
      magic = true;
    } else if (key == "species") {
      ls >> dims.species;
    } else if (key == "timesteps") {
      ls >> dims.timesteps;
    } else if (key == "height") {
      ls >> dims.height;
    } else if (key == "width") {
      ls >> dims.width;
    } else if (key == "names") {
      std::string n;
      while (ls >> n) names.push_back(n);
      continue;
    } else if (key == "remainder_filled") {
      int f = 0;
      ls >> f;
      filled = f != 0;
    } else {
      throw Error(ErrorKind::kInvalidInput, kModule, "unknown sidecar key '" + key + "'");
    }
    if (ls.fail()) throw Error(ErrorKind::kInvalidInput, kModule, "malformed sidecar line: " + line);
  }
  if (!magic) throw Error(ErrorKind::kInvalidInput, kModule, "sidecar missing 'gbatc-field' line");

  const std::vector<std::uint8_t> raw = read_bytes(data_path);
  if (dims.species < 1 || dims.timesteps < 1 || dims.height < 1 || dims.width < 1) {
    throw Error(ErrorKind::kInvalidInput, kModule, "sidecar dimensions must be positive");
  }
  if (raw.size() != dims.size() * sizeof(float)) {
    throw Error(ErrorKind::kTruncation, kModule,
                "expected " + std::to_string(dims.size() * sizeof(float)) + " bytes, file has " +
                    std::to_string(raw.size()));
  }
  std::vector<double> values(dims.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    float f;
    std::memcpy(&f, raw.data() + i * sizeof(float), sizeof(float));
    values[i] = f;
  }
  FieldDataset ds(dims, std::move(values), std::move(names));
  ds.set_remainder_filled(filled);
  return ds;
}

void write_field(const std::filesystem::path& data_path, const FieldDataset& dataset) {
  const auto values = dataset.values();
  std::vector<std::uint8_t> raw(values.size() * sizeof(float));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(raw.data() + i * sizeof(float), &f, sizeof(float));
  }
  const FieldDims& d = dataset.dims();
  std::ostringstream hdr;
  hdr << "gbatc-field 1\n"
      << "species " << d.species << "\n"
      << "timesteps " << d.timesteps << "\n"
      << "height " << d.height << "\n"
      << "width " << d.width << "\n"
      << "names";
  for (const std::string& n : dataset.species_names()) hdr << ' ' << n;
  hdr << "\nremainder_filled " << (dataset.remainder_filled() ? 1 : 0) << "\n";
  const std::string text = hdr.str();

  write_bytes_atomic(data_path, raw);
  write_bytes_atomic(sidecar_path(data_path),
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

FieldDataset round_to_storage(const FieldDataset& dataset) {
  std::vector<double> values(dataset.values().begin(), dataset.values().end());
  for (double& v : values) v = static_cast<float>(v);
  FieldDataset out(dataset.dims(), std::move(values), dataset.species_names());
  out.set_remainder_filled(dataset.remainder_filled());
  return out;
}

}  // namespace gbatc
