#include "gbatc/archive.hpp"

#include <algorithm>
#include <map>

#include "json.hpp"

#include "gbatc/bytes.hpp"
#include "gbatc/error.hpp"

namespace gbatc {
namespace {

constexpr const char* kModule = "archive";
constexpr std::size_t kPreambleBytes = 8;
constexpr std::size_t kEntryBytes = 24;

using nlohmann::json;

constexpr SectionTag kOrder[] = {SectionTag::kHeader, SectionTag::kPredictor, SectionTag::kLatents,
                                 SectionTag::kBases, SectionTag::kRecords};

json header_to_json(const ArchiveHeader& h) {
  json j;
  j["format"] = "gbatc";
  j["dims"] = {{"species", h.dims.species},
               {"timesteps", h.dims.timesteps},
               {"height", h.dims.height},
               {"width", h.dims.width}};
  j["species_names"] = h.species_names;
  j["geometry"] = {{"timesteps", h.geometry.timesteps},
                   {"rows", h.geometry.rows},
                   {"cols", h.geometry.cols},
                   {"remainder", h.geometry.remainder == RemainderPolicy::kDrop ? "drop" : "pad"}};
  j["predictor"] = to_string(h.predictor);
  j["predictor_spec"] = h.predictor_spec;
  j["bound"] = {{"mode", to_string(h.bound_mode)},
                {"value", h.bound_value},
                {"tau", h.tau},
                {"coefficient_bin", h.coefficient_bin}};
  j["latent"] = {{"bin", h.latent_bin}, {"bins", h.latent_bins}};
  j["schedule"] = to_string(h.schedule);
  j["truncated_bases"] = h.truncated_bases;
  j["seed"] = h.seed;
  j["block_count"] = h.block_count;
  j["config"] = h.config;
  return j;
}

PredictorKind parse_kind(const std::string& s) {
  if (s == "zero") return PredictorKind::kZero;
  if (s == "pca") return PredictorKind::kPca;
  if (s == "gba") return PredictorKind::kGba;
  if (s == "gbatc") return PredictorKind::kGbatc;
  throw Error(ErrorKind::kCorruption, kModule, "unknown predictor kind '" + s + "'");
}

ArchiveHeader header_from_json(const json& j) {
  if (j.value("format", "") != "gbatc") {
    throw Error(ErrorKind::kCorruption, kModule, "header is not a gbatc header");
  }
  ArchiveHeader h;
  const json& d = j.at("dims");
  h.dims = {d.at("species").get<int>(), d.at("timesteps").get<int>(), d.at("height").get<int>(),
            d.at("width").get<int>()};
  h.species_names = j.at("species_names").get<std::vector<std::string>>();
  const json& g = j.at("geometry");
  h.geometry.timesteps = g.at("timesteps").get<int>();
  h.geometry.rows = g.at("rows").get<int>();
  h.geometry.cols = g.at("cols").get<int>();
  const std::string rem = g.at("remainder").get<std::string>();
  if (rem != "drop" && rem != "pad") throw Error(ErrorKind::kCorruption, kModule, "unknown remainder policy");
  h.geometry.remainder = rem == "drop" ? RemainderPolicy::kDrop : RemainderPolicy::kPadReplicate;
  h.predictor = parse_kind(j.at("predictor").get<std::string>());
  h.predictor_spec = j.at("predictor_spec").get<std::string>();
  const json& b = j.at("bound");
  const std::string mode = b.at("mode").get<std::string>();
  if (mode != "absolute" && mode != "nrmse") throw Error(ErrorKind::kCorruption, kModule, "unknown bound mode");
  h.bound_mode = mode == "absolute" ? BoundMode::kAbsolute : BoundMode::kNrmse;
  h.bound_value = b.at("value").get<double>();
  h.tau = b.at("tau").get<std::vector<double>>();
  h.coefficient_bin = b.at("coefficient_bin").get<std::vector<double>>();
  h.latent_bin = j.at("latent").at("bin").get<double>();
  h.latent_bins = j.at("latent").at("bins").get<int>();
  const std::string schedule = j.at("schedule").get<std::string>();
  if (schedule != "stepwise" && schedule != "fast") throw Error(ErrorKind::kCorruption, kModule, "unknown schedule");
  h.schedule = schedule == "stepwise" ? Schedule::kStepwise : Schedule::kFast;
  h.truncated_bases = j.at("truncated_bases").get<bool>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.block_count = j.at("block_count").get<std::uint64_t>();
  h.config = j.at("config").get<std::string>();

  const std::size_t s = static_cast<std::size_t>(std::max(h.dims.species, 0));
  if (h.dims.species < 1 || h.dims.timesteps < 1 || h.dims.height < 1 || h.dims.width < 1 ||
      h.species_names.size() != s || h.tau.size() != s || h.coefficient_bin.size() != s) {
    throw Error(ErrorKind::kCorruption, kModule, "header dimensions are inconsistent");
  }
  return h;
}

std::vector<std::uint8_t> encode_latents(const LatentSection& l) {
  ByteWriter w;
  w.u64(l.count);
  w.u32(l.length);
  l.codebook.serialize(w);
  l.stream.serialize(w);
  return w.take();
}

LatentSection decode_latents(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, kModule);
  LatentSection l;
  l.count = r.u64();
  l.length = r.u32();
  l.codebook = Codebook::deserialize(r);
  l.stream = BitStream::deserialize(r);
  r.expect_done();
  return l;
}

std::vector<std::uint8_t> encode_bases(const std::vector<BasisSection>& bases) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(bases.size()));
  for (const BasisSection& b : bases) {
    w.u32(static_cast<std::uint32_t>(b.dimension));
    const bool truncated = !b.present.empty();
    w.u8(truncated ? 1 : 0);
    if (truncated) {
      BitWriter mask;
      for (std::size_t k = 0; k < b.dimension; ++k) mask.put_bit(b.present[k] != 0);
      w.bytes(mask.finish().bytes);
    }
    for (std::size_t k = 0; k < b.dimension; ++k) {
      if (truncated && b.present[k] == 0) continue;
      for (std::size_t j = 0; j < b.dimension; ++j) w.f32(static_cast<float>(b.vectors(j, k)));
    }
  }
  return w.take();
}

std::vector<BasisSection> decode_bases(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, kModule);
  const std::uint32_t count = r.u32();
  std::vector<BasisSection> out;
  for (std::uint32_t s = 0; s < count; ++s) {
    BasisSection b;
    b.dimension = r.u32();
    if (b.dimension == 0 || b.dimension > (1u << 16)) {
      throw Error(ErrorKind::kCorruption, kModule, "implausible basis dimension");
    }
    const bool truncated = r.u8() != 0;
    if (truncated) {
      BitStream mask;
      auto raw = r.bytes((b.dimension + 7) / 8);
      mask.bytes.assign(raw.begin(), raw.end());
      mask.bit_length = b.dimension;
      BitReader br(mask);
      b.present.resize(b.dimension);
      for (auto& p : b.present) p = br.get_bit() ? 1 : 0;
    }
    b.vectors = Matrix(b.dimension, b.dimension);
    for (std::size_t k = 0; k < b.dimension; ++k) {
      if (truncated && b.present[k] == 0) continue;
      for (std::size_t j = 0; j < b.dimension; ++j) b.vectors(j, k) = r.f32();
    }
    out.push_back(std::move(b));
  }
  r.expect_done();
  return out;
}

std::vector<std::uint8_t> encode_records(const RecordSection& rec) {
  ByteWriter w;
  rec.codebook.serialize(w);
  rec.indices.serialize(w);
  rec.coefficients.serialize(w);
  return w.take();
}

RecordSection decode_records(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, kModule);
  RecordSection rec;
  rec.codebook = Codebook::deserialize(r);
  rec.indices = BitStream::deserialize(r);
  rec.coefficients = BitStream::deserialize(r);
  r.expect_done();
  return rec;
}

}  // namespace

std::string to_string(SectionTag tag) {
  switch (tag) {
    case SectionTag::kHeader: return "HEAD";
    case SectionTag::kPredictor: return "PRED";
    case SectionTag::kLatents: return "LATN";
    case SectionTag::kBases: return "BASE";
    case SectionTag::kRecords: return "RECS";
  }
  return "????";
}

std::uint64_t SizeReport::compressed_bytes() const {
  std::uint64_t total = table_bytes;
  for (const auto& [name, bytes] : sections) total += bytes;
  return total;
}

double compression_ratio(const SizeReport& report) {
  const std::uint64_t c = report.compressed_bytes();
  if (c == 0) throw Error(ErrorKind::kInvalidInput, kModule, "compressed size is zero");
  return static_cast<double>(report.raw_bytes) / static_cast<double>(c);
}

std::size_t table_size(std::size_t section_count) {
  return kPreambleBytes + section_count * kEntryBytes + 4;
}

std::vector<std::uint8_t> write_archive(const ArchiveContents& contents) {
  const std::string header = header_to_json(contents.header).dump();
  std::vector<std::vector<std::uint8_t>> payloads;
  payloads.emplace_back(header.begin(), header.end());
  payloads.push_back(contents.predictor);
  payloads.push_back(encode_latents(contents.latents));
  payloads.push_back(encode_bases(contents.bases));
  payloads.push_back(encode_records(contents.records));

  ByteWriter w;
  for (char c : kArchiveMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kArchiveVersion);
  w.u16(static_cast<std::uint16_t>(payloads.size()));
  std::uint64_t offset = table_size(payloads.size());
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    w.u32(static_cast<std::uint32_t>(kOrder[i]));
    w.u64(offset);
    w.u64(payloads[i].size());
    w.u32(crc32(payloads[i]));
    offset += payloads[i].size();
  }
  w.u32(crc32(w.data()));
  for (const auto& p : payloads) w.bytes(p);
  return w.take();
}

std::vector<SectionEntry> read_section_table(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, kModule);
  for (char c : kArchiveMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) throw Error(ErrorKind::kCorruption, kModule, "bad magic");
  }
  const std::uint16_t version = r.u16();
  if (version != kArchiveVersion) {
    throw Error(ErrorKind::kVersion, kModule,
                "unsupported archive version " + std::to_string(version) + " (expected " +
                    std::to_string(kArchiveVersion) + ")");
  }
  const std::uint16_t count = r.u16();
  if (table_size(count) > bytes.size()) {
    throw Error(ErrorKind::kTruncation, kModule, "section table runs past the end of the archive");
  }
  std::vector<SectionEntry> entries(count);
  for (SectionEntry& e : entries) {
    e.tag = static_cast<SectionTag>(r.u32());
    e.offset = r.u64();
    e.length = r.u64();
    e.crc = r.u32();
  }
  const std::size_t table_end = r.position();
  const std::uint32_t table_crc = r.u32();
  if (crc32(bytes.first(table_end)) != table_crc) {
    throw Error(ErrorKind::kChecksum, kModule, "section table checksum mismatch");
  }
  std::uint64_t expected = table_size(count);
  for (const SectionEntry& e : entries) {
    if (e.offset != expected) {
      throw Error(ErrorKind::kCorruption, kModule, "section " + to_string(e.tag) + " is not contiguous");
    }
    if (e.length > bytes.size() - std::min<std::uint64_t>(bytes.size(), e.offset)) {
      throw Error(ErrorKind::kTruncation, kModule, "section " + to_string(e.tag) + " runs past the end");
    }
    expected += e.length;
  }
  if (expected != bytes.size()) {
    throw Error(expected > bytes.size() ? ErrorKind::kTruncation : ErrorKind::kCorruption, kModule,
                "archive size differs from the declared section lengths");
  }
  return entries;
}

ArchiveContents read_archive(std::span<const std::uint8_t> bytes) {
  const std::vector<SectionEntry> entries = read_section_table(bytes);
  std::map<SectionTag, std::span<const std::uint8_t>> found;
  for (const SectionEntry& e : entries) {
    const std::string name = to_string(e.tag);
    if (name == "????") throw Error(ErrorKind::kCorruption, kModule, "unknown section tag");
    if (found.count(e.tag) != 0) throw Error(ErrorKind::kCorruption, kModule, "duplicate section " + name);
    auto payload = bytes.subspan(static_cast<std::size_t>(e.offset), static_cast<std::size_t>(e.length));
    if (crc32(payload) != e.crc) {
      throw Error(ErrorKind::kChecksum, kModule, "checksum mismatch in section " + name);
    }
    found[e.tag] = payload;
  }
  for (SectionTag tag : kOrder) {
    if (found.count(tag) == 0) {
      throw Error(ErrorKind::kValidation, kModule, "required section " + to_string(tag) + " is missing");
    }
  }

  ArchiveContents c;
  try {
    const auto head = found[SectionTag::kHeader];
    c.header = header_from_json(json::parse(head.begin(), head.end()));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruption, kModule, std::string("malformed header: ") + e.what());
  }
  const auto pred = found[SectionTag::kPredictor];
  c.predictor.assign(pred.begin(), pred.end());
  c.latents = decode_latents(found[SectionTag::kLatents]);
  c.bases = decode_bases(found[SectionTag::kBases]);
  c.records = decode_records(found[SectionTag::kRecords]);
  if (c.bases.size() != static_cast<std::size_t>(c.header.dims.species)) {
    throw Error(ErrorKind::kValidation, kModule, "basis count does not match the species count");
  }
  for (const BasisSection& b : c.bases) {
    if (b.dimension != c.header.geometry.block_size()) {
      throw Error(ErrorKind::kValidation, kModule, "basis dimension does not match the block geometry");
    }
  }
  return c;
}

SizeReport size_report(std::span<const std::uint8_t> archive, const FieldDims& dims) {
  SizeReport r;
  r.raw_bytes = static_cast<std::uint64_t>(dims.size()) * 4;
  const auto entries = read_section_table(archive);
  r.table_bytes = table_size(entries.size());
  for (const SectionEntry& e : entries) r.sections.emplace_back(to_string(e.tag), e.length);
  return r;
}

BasisSection store_basis(const ResidualBasis& basis, std::span<const std::uint8_t> present) {
  BasisSection b;
  b.dimension = basis.dimension;
  b.present.assign(present.begin(), present.end());
  b.vectors = Matrix(basis.dimension, basis.dimension);
  for (std::size_t k = 0; k < basis.dimension; ++k) {
    if (!b.present.empty() && b.present[k] == 0) continue;
    for (std::size_t j = 0; j < basis.dimension; ++j) {
      b.vectors(j, k) = static_cast<double>(static_cast<float>(basis.vectors(j, k)));
    }
  }
  return b;
}

ResidualBasis load_basis(const BasisSection& section, int species) {
  return stored_basis(section.vectors, species);
}

}  // namespace gbatc
