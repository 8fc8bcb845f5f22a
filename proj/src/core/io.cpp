#include "patchgen/core/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace patchgen::io {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw FormatError("truncated payload at byte offset " + std::to_string(offset_) + ": need " +
                      std::to_string(n) + " bytes, have " + std::to_string(remaining()));
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[offset_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  const auto v = static_cast<std::uint16_t>(bytes_[offset_] | (bytes_[offset_ + 1] << 8));
  offset_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
  offset_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
  offset_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
  need(n);
  auto s = bytes_.subspan(offset_, n);
  offset_ += n;
  return s;
}

void ByteReader::expect_magic(const char (&magic)[4]) {
  if (remaining() < 4 || std::memcmp(bytes_.data() + offset_, magic, 4) != 0) {
    throw FormatError("bad magic at byte offset " + std::to_string(offset_) + ": expected '" +
                      std::string(magic, 4) + "'");
  }
  offset_ += 4;
}

CloudFormat format_for_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".pcpf" || ext == ".bin") ? CloudFormat::binary : CloudFormat::text;
}

std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> out;
  out.reserve(9 + cloud.size() * 12);
  out.insert(out.end(), kCloudMagic, kCloudMagic + 4);
  put_u8(out, kCloudVersion);
  put_u32(out, static_cast<std::uint32_t>(cloud.size()));
  const Points& p = cloud.points();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (int k = 0; k < 3; ++k) put_f32(out, static_cast<float>(p(i, k)));
  }
  return out;
}

PointCloud decode_cloud(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.expect_magic(kCloudMagic);
  const std::size_t version_offset = in.offset();
  const auto version = in.u8();
  if (version != kCloudVersion) {
    throw FormatError("unsupported version " + std::to_string(version) + " at byte offset " +
                      std::to_string(version_offset));
  }
  const auto count = in.u32();
  if (count == 0) throw FormatError("empty point cloud at byte offset 5");
  if (in.remaining() < static_cast<std::size_t>(count) * 12) {
    throw FormatError("truncated payload at byte offset " + std::to_string(in.offset() + in.remaining()) +
                      ": header declares " + std::to_string(count) + " points");
  }
  Points p(count, 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const std::size_t at = in.offset();
      const float v = in.f32();
      if (!std::isfinite(v)) throw FormatError("non-finite value at byte offset " + std::to_string(at));
      p(i, k) = v;
    }
  }
  if (in.remaining() != 0) {
    throw FormatError("trailing bytes at byte offset " + std::to_string(in.offset()));
  }
  return PointCloud(std::move(p));
}

std::string format_cloud_text(const PointCloud& cloud) {
  std::ostringstream os;
  os.precision(17);  // shortest width that round-trips every double
  const Points& p = cloud.points();
  for (Eigen::Index i = 0; i < p.rows(); ++i) os << p(i, 0) << ' ' << p(i, 1) << ' ' << p(i, 2) << '\n';
  return os.str();
}

PointCloud parse_cloud_text(const std::string& text) {
  std::vector<double> values;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t offset = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<double> row;
    std::string tok;
    while (fields >> tok) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError("line " + std::to_string(line_no) + " (byte offset " + std::to_string(line_offset) +
                          "): cannot parse '" + tok + "'");
      }
      if (!std::isfinite(v)) {
        throw FormatError("non-finite value on line " + std::to_string(line_no) + " (byte offset " +
                          std::to_string(line_offset) + ")");
      }
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (row.size() != 3) {
      throw FormatError("line " + std::to_string(line_no) + " (byte offset " + std::to_string(line_offset) +
                        ") has " + std::to_string(row.size()) + " values, expected 3");
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  if (values.empty()) throw FormatError("text cloud contains no points");
  Points p(static_cast<Eigen::Index>(values.size() / 3), 3);
  std::copy(values.begin(), values.end(), p.data());
  return PointCloud(std::move(p));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

template <typename F>
auto with_path(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  write_cloud(path, cloud, format_for_path(path));
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud, CloudFormat format) {
  if (format == CloudFormat::binary) {
    write_file_bytes(path, encode_cloud(cloud));
  } else {
    const std::string text = format_cloud_text(cloud);
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }
}

PointCloud read_cloud(const std::filesystem::path& path) { return read_cloud(path, format_for_path(path)); }

PointCloud read_cloud(const std::filesystem::path& path, CloudFormat format) {
  return with_path(path, [&] {
    if (format == CloudFormat::binary) return decode_cloud(read_file_bytes(path));
    return parse_cloud_text(read_text(path));
  });
}

void write_patch_ids(const std::filesystem::path& path, std::span<const std::uint16_t> ids) {
  std::vector<std::uint8_t> out(kPatchIdMagic, kPatchIdMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(ids.size()));
  for (auto id : ids) put_u16(out, id);
  write_file_bytes(path, out);
}

std::vector<std::uint16_t> read_patch_ids(const std::filesystem::path& path) {
  return with_path(path, [&] {
    const auto bytes = read_file_bytes(path);
    ByteReader in(bytes);
    in.expect_magic(kPatchIdMagic);
    const auto count = in.u32();
    std::vector<std::uint16_t> ids(count);
    for (auto& id : ids) id = in.u16();
    if (in.remaining() != 0) throw FormatError("trailing bytes at byte offset " + std::to_string(in.offset()));
    return ids;
  });
}

void write_embedding(const std::filesystem::path& path, std::span<const float> values) {
  std::vector<std::uint8_t> out(kEmbeddingMagic, kEmbeddingMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(values.size()));
  for (float v : values) put_f32(out, v);
  write_file_bytes(path, out);
}

std::vector<float> read_embedding(const std::filesystem::path& path) {
  return with_path(path, [&] {
    const auto bytes = read_file_bytes(path);
    ByteReader in(bytes);
    in.expect_magic(kEmbeddingMagic);
    const auto dim = in.u32();
    std::vector<float> values(dim);
    for (auto& v : values) v = in.f32();
    if (in.remaining() != 0) throw FormatError("trailing bytes at byte offset " + std::to_string(in.offset()));
    return values;
  });
}

namespace {

TriangleMesh assemble_mesh(const std::vector<double>& verts, const std::vector<int>& faces) {
  TriangleMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size() / 3), 3);
  std::copy(verts.begin(), verts.end(), mesh.vertices.data());
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size() / 3), 3);
  std::copy(faces.begin(), faces.end(), mesh.faces.data());
  mesh.validate();
  return mesh;
}

}  // namespace

TriangleMesh parse_off(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string tok;
    while (fields >> tok) tokens.push_back(tok);
  }
  std::size_t pos = 0;
  auto next = [&]() -> const std::string& {
    if (pos >= tokens.size()) throw FormatError("OFF: unexpected end of file");
    return tokens[pos++];
  };
  std::string head = next();
  // Some exporters glue the counts to the header ("OFF1234 ...").
  if (head.rfind("OFF", 0) != 0) throw FormatError("OFF: bad magic");
  if (head.size() > 3) {
    tokens[--pos] = head.substr(3);
  }
  try {
    const long nv = std::stol(next());
    const long nf = std::stol(next());
    next();  // edge count
    std::vector<double> verts;
    verts.reserve(static_cast<std::size_t>(nv) * 3);
    for (long i = 0; i < nv * 3; ++i) verts.push_back(std::stod(next()));
    std::vector<int> faces;
    for (long f = 0; f < nf; ++f) {
      const int arity = std::stoi(next());
      std::vector<int> idx(static_cast<std::size_t>(arity));
      for (auto& v : idx) v = std::stoi(next());
      if (arity == 3) faces.insert(faces.end(), idx.begin(), idx.end());
    }
    return assemble_mesh(verts, faces);
  } catch (const std::logic_error&) {
    throw FormatError("OFF: malformed number near token " + std::to_string(pos));
  }
}

TriangleMesh parse_obj(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> verts;
  std::vector<int> faces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string kind;
    if (!(fields >> kind)) continue;
    try {
      if (kind == "v") {
        double x, y, z;
        if (!(fields >> x >> y >> z)) throw FormatError("bad vertex");
        verts.insert(verts.end(), {x, y, z});
      } else if (kind == "f") {
        std::vector<int> idx;
        std::string tok;
        while (fields >> tok) {
          // "7", "7/1", "7//3", "7/1/3"; negative indices are relative.
          int v = std::stoi(tok.substr(0, tok.find('/')));
          v = v < 0 ? static_cast<int>(verts.size() / 3) + v : v - 1;
          idx.push_back(v);
        }
        if (idx.size() == 3) faces.insert(faces.end(), idx.begin(), idx.end());
      }
    } catch (const std::exception&) {
      throw FormatError("OBJ: malformed record on line " + std::to_string(line_no));
    }
  }
  return assemble_mesh(verts, faces);
}

TriangleMesh read_mesh(const std::filesystem::path& path) {
  return with_path(path, [&] {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    const std::string text = read_text(path);
    if (ext == ".off") return parse_off(text);
    if (ext == ".obj") return parse_obj(text);
    throw FormatError("unsupported mesh extension '" + ext + "'");
  });
}

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir, const std::string& extension) {
  if (!std::filesystem::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace patchgen::io
