#include "sdrom/container.hpp"

#include "sdrom/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sdrom {

namespace {

void put_le(std::string& out, double x) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xffu));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(p[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

}  // namespace

const Eigen::MatrixXd& Container::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a.data;
  }
  throw Error(ErrorCode::malformed_manifest, "container has no array named " + name);
}

bool Container::has_array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  nlohmann::json meta = c.meta;
  meta["container_version"] = kContainerVersion;
  nlohmann::json entries = nlohmann::json::array();
  std::string payload;
  for (const auto& a : c.arrays) {
    entries.push_back({{"name", a.name}, {"rows", a.data.rows()}, {"cols", a.data.cols()}, {"offset", payload.size()}});
    for (Eigen::Index i = 0; i < a.data.rows(); ++i)
      for (Eigen::Index j = 0; j < a.data.cols(); ++j) put_le(payload, a.data(i, j));
  }
  meta["arrays"] = entries;
  meta["payload_bytes"] = payload.size();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
  const std::string header = meta.dump();
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.put('\n');
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_input, "cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::malformed_manifest, path.string() + ": missing manifest line");
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Container c;
  try {
    c.meta = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_manifest, path.string() + ": " + e.what());
  }
  if (!c.meta.is_object() || !c.meta.contains("arrays") || !c.meta["arrays"].is_array()) {
    throw Error(ErrorCode::malformed_manifest, path.string() + ": manifest lacks an arrays list");
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
  for (const auto& e : c.meta["arrays"]) {
    NamedArray a;
    std::size_t offset = 0;
    Eigen::Index rows = 0, cols = 0;
    try {
      a.name = e.at("name").get<std::string>();
      rows = e.at("rows").get<Eigen::Index>();
      cols = e.at("cols").get<Eigen::Index>();
      offset = e.at("offset").get<std::size_t>();
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::malformed_manifest, path.string() + ": bad array entry: " + ex.what());
    }
    if (rows < 0 || cols < 0) throw Error(ErrorCode::malformed_manifest, a.name + ": negative shape");
    const std::size_t need = static_cast<std::size_t>(rows * cols) * 8;
    if (offset + need > payload.size()) {
      throw Error(ErrorCode::truncated_payload, path.string() + ": array " + a.name + " extends past end of file");
    }
    a.data.resize(rows, cols);
    const unsigned char* p = bytes + offset;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j, p += 8) a.data(i, j) = get_le(p);
    c.arrays.push_back(std::move(a));
  }
  return c;
}

}  // namespace sdrom
