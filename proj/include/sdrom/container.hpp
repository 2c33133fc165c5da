#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace sdrom {

// Single-file container: one line of UTF-8 JSON (the manifest) terminated by
// '\n', followed by raw little-endian float64 arrays stored row-major. The
// manifest's "arrays" entry lists name, rows, cols and byte offset (relative
// to the first payload byte) of every array, in payload order.
struct NamedArray {
  std::string name;
  Eigen::MatrixXd data;
};

struct Container {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const Eigen::MatrixXd& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

inline constexpr int kContainerVersion = 1;

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

}  // namespace sdrom
