#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mteforge/estimator.hpp"
#include "mteforge/random.hpp"

namespace mteforge::estimator {

namespace {

constexpr std::string_view kMagic = "EMB";
constexpr std::string_view kVersion = "v1";

void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_f32(std::ostream& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  const char b[4] = {static_cast<char>(bits & 0xFF),
                     static_cast<char>((bits >> 8) & 0xFF),
                     static_cast<char>((bits >> 16) & 0xFF),
                     static_cast<char>((bits >> 24) & 0xFF)};
  out.write(b, 4);
}

bool read_exact(std::istream& in, char* buf, std::size_t n) {
  in.read(buf, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

float f32_from_le(const unsigned char* b) {
  const std::uint32_t bits = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) |
                             (std::uint32_t{b[2]} << 16) |
                             (std::uint32_t{b[3]} << 24);
  return std::bit_cast<float>(bits);
}

// FNV-1a over the UTF-8 bytes.
std::uint64_t hash_text(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

void EmbeddingTable::add(const std::string& id, std::vector<float> values) {
  if (values.size() != dim_) {
    throw DimMismatch("'" + id + "' has " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(dim_));
  }
  if (!entries_.emplace(id, std::move(values)).second) {
    throw DuplicateId("embedding id '" + id + "' appears twice");
  }
}

const std::vector<float>& EmbeddingTable::at(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw MissingEmbedding("no embedding for '" + id + "'");
  return it->second;
}

Vector EmbeddingTable::vector(const std::string& id) const {
  const auto& v = at(id);
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = v[i];
  }
  return out;
}

EmbeddingTable load_embeddings(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw BadHeader("empty embedding file");
  std::istringstream hs(header);
  std::string magic, version;
  long long dim = -1, count = -1;
  std::string extra;
  if (!(hs >> magic >> version >> dim >> count) || (hs >> extra) ||
      magic != kMagic || version != kVersion || dim < 1 || count < 0) {
    throw BadHeader("expected 'EMB v1 <dim> <count>', got '" + header + "'");
  }
  EmbeddingTable table(static_cast<std::size_t>(dim));
  std::vector<unsigned char> buf(static_cast<std::size_t>(dim) * 4);
  for (long long i = 0; i < count; ++i) {
    unsigned char len_bytes[2];
    if (!read_exact(in, reinterpret_cast<char*>(len_bytes), 2)) {
      throw BadHeader("header declares " + std::to_string(count) +
                      " entries, file holds " + std::to_string(i));
    }
    const std::size_t len = len_bytes[0] | (std::size_t{len_bytes[1]} << 8);
    std::string id(len, '\0');
    if (!read_exact(in, id.data(), len)) {
      throw BadHeader("truncated id in entry " + std::to_string(i));
    }
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got != buf.size()) {
      throw DimMismatch("'" + id + "' has " + std::to_string(got / 4) +
                        " values, header declares dim " + std::to_string(dim));
    }
    std::vector<float> values(static_cast<std::size_t>(dim));
    for (std::size_t k = 0; k < values.size(); ++k) {
      values[k] = f32_from_le(&buf[4 * k]);
    }
    table.add(id, std::move(values));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw BadHeader("trailing bytes after " + std::to_string(count) +
                    " declared entries");
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return load_embeddings(in);
}

void save_embeddings(std::ostream& out, const EmbeddingTable& table) {
  out << kMagic << ' ' << kVersion << ' ' << table.dim() << ' ' << table.size()
      << '\n';
  for (const auto& [id, values] : table.entries()) {
    if (id.size() > 0xFFFF) throw InvalidArgument("embedding id too long");
    put_u16(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (float f : values) put_f32(out, f);
  }
}

void save_embeddings(const std::filesystem::path& path,
                     const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  save_embeddings(out, table);
}

std::vector<float> pseudo_embed(std::string_view text, std::size_t dim,
                                std::uint64_t seed) {
  if (dim < 1) throw InvalidArgument("embedding dim must be >= 1");
  const std::uint64_t base = mix64(hash_text(text) ^ mix64(seed));
  std::vector<double> raw(dim);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const std::uint64_t h = mix64(base + 0x9E3779B97F4A7C15ULL * (i + 1));
    raw[i] = static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;  // [-1, 1)
    norm2 += raw[i] * raw[i];
  }
  if (norm2 == 0.0) {
    raw[0] = 1.0;
    norm2 = 1.0;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(raw[i] * inv);
  return out;
}

std::string segment_id(std::string_view record_id, Segment segment) {
  std::string id(record_id);
  switch (segment) {
    case Segment::Source:
      return id + "/src";
    case Segment::Translation:
      return id + "/mt";
    case Segment::Reference:
      return id + "/ref";
  }
  return id;
}

EmbeddingTable pseudo_embed_records(
    const std::vector<corpus::AnnotationRecord>& records, std::size_t dim,
    std::uint64_t seed) {
  EmbeddingTable table(dim);
  for (const auto& r : records) {
    table.add(segment_id(r.record_id, Segment::Source),
              pseudo_embed(r.source, dim, seed));
    table.add(segment_id(r.record_id, Segment::Translation),
              pseudo_embed(r.mt_output, dim, seed));
    if (r.reference) {
      table.add(segment_id(r.record_id, Segment::Reference),
                pseudo_embed(*r.reference, dim, seed));
    }
  }
  return table;
}

}  // namespace mteforge::estimator
