// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/common.hpp"

namespace vtg {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

inline void write_f32_array(std::ostream& os, const float* data, size_t count) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
}

inline void read_f32_array(std::istream& is, float* data, size_t count, const std::string& what) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4));
  if (!is) {
    throw Error(ErrorCategory::data, "truncated array block: " + what);
  }
}

// Single-tensor file: one line of JSON {"dims": [...], "dtype": "f32"} followed
// by raw little-endian float32 data. One file per named parameter.
inline void save_tensor(const std::filesystem::path& path, const std::vector<int64_t>& dims,
                        const float* data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw Error(ErrorCategory::io, "cannot open for write: " + path.string());
  }
  nlohmann::json header{{"dims", dims}, {"dtype", "f32"}};
  os << header.dump() << '\n';
  size_t count = 1;
  for (int64_t d : dims) count *= static_cast<size_t>(d);
  write_f32_array(os, data, count);
  if (!os) {
    throw Error(ErrorCategory::io, "write failed: " + path.string());
  }
}

inline std::vector<float> load_tensor(const std::filesystem::path& path,
                                      std::vector<int64_t>& dims_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(ErrorCategory::io, "cannot open: " + path.string());
  }
  std::string line;
  if (!std::getline(is, line)) {
    throw Error(ErrorCategory::data, "missing tensor header: " + path.string());
  }
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.contains("dims") || header.value("dtype", "") != "f32") {
    throw Error(ErrorCategory::data, "bad tensor header: " + path.string());
  }
  dims_out = header["dims"].get<std::vector<int64_t>>();
  size_t count = 1;
  for (int64_t d : dims_out) count *= static_cast<size_t>(d);
  std::vector<float> data(count);
  read_f32_array(is, data.data(), count, path.string());
  return data;
}

template <class S>
void save_matrix(const std::filesystem::path& path, const Mat<S>& m) {
  Matf f = m.template cast<float>();
  save_tensor(path, {m.rows(), m.cols()}, f.data());
}

template <class S>
Mat<S> load_matrix(const std::filesystem::path& path) {
  std::vector<int64_t> dims;
  std::vector<float> data = load_tensor(path, dims);
  if (dims.size() != 2) {
    throw Error(ErrorCategory::data, "expected rank-2 tensor: " + path.string());
  }
  Mat<S> out(dims[0], dims[1]);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out.data()[i] = static_cast<S>(data[static_cast<size_t>(i)]);
  }
  return out;
}

}  // namespace vtg
