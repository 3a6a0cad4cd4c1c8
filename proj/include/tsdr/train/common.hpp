#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tsdr/nn/adam.hpp"

namespace tsdr {

/// Deep copies of parameter values, for best-epoch snapshots.
inline std::vector<Tensor> snapshot_values(const std::vector<nn::Param*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const nn::Param* p : params) out.push_back(p->value);
  return out;
}

inline void restore_values(const std::vector<nn::Param*>& params,
                           const std::vector<Tensor>& values) {
  require(params.size() == values.size(), "restore_values: snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->value.same_shape(values[i]), "restore_values: shape mismatch at slot " +
                                                        std::to_string(i) + " (" +
                                                        params[i]->name + ")");
    params[i]->value = values[i];
  }
}

inline void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), "cannot write file: " + path);
  out << content;
  require(static_cast<bool>(out), "write failed: " + path);
}

}  // namespace tsdr
