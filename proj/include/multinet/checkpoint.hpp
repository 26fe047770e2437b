// Checkpoint serialization. A checkpoint is a text header describing the
// model configuration and the tensor table, followed by raw little-endian
// float32 payloads in header order. Optimizer moments are stored alongside
// the parameters under "adam.m." / "adam.v." prefixes so training resumes
// exactly.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "multinet/params.hpp"

namespace multinet {

template <typename T>
struct AdamState {
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;
  long long step = 0;
};

namespace detail {

inline constexpr const char* kCheckpointMagic = "MNET1";

struct TensorEntry {
  std::string name;
  std::vector<int> shape;
  const float* data = nullptr;  // save side
  size_t count = 0;
};

inline void write_f32_block(std::ostream& os, const float* data, size_t count) {
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
}

inline void read_f32_block(std::istream& is, float* data, size_t count, const std::string& name) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4));
  if (static_cast<size_t>(is.gcount()) != count * 4)
    throw data_error("checkpoint truncated: tensor '" + name + "' expected " + std::to_string(count * 4) +
                     " payload bytes, got " + std::to_string(is.gcount()));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParamStore<float>& params, const AdamState<float>& adam,
                            const std::map<std::string, std::string>& config, long long step) {
  std::vector<detail::TensorEntry> entries;
  for (const auto& [name, t] : params)
    entries.push_back({name, t.shape(), t.data(), static_cast<size_t>(t.size())});
  for (const auto& [name, vec] : adam.m) {
    const auto& t = params.at(name);
    check_arg(vec.size() == static_cast<size_t>(t.size()), "save_checkpoint: adam.m size mismatch for " + name);
    entries.push_back({"adam.m." + name, t.shape(), vec.data(), vec.size()});
  }
  for (const auto& [name, vec] : adam.v) {
    const auto& t = params.at(name);
    check_arg(vec.size() == static_cast<size_t>(t.size()), "save_checkpoint: adam.v size mismatch for " + name);
    entries.push_back({"adam.v." + name, t.shape(), vec.data(), vec.size()});
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.name < b.name; });

  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot open checkpoint for writing: " + path);
  os << detail::kCheckpointMagic << "\n";
  os << "step " << step << "\n";
  for (const auto& [k, v] : config) os << "config " << k << " " << v << "\n";
  for (const auto& e : entries) {
    os << "tensor " << e.name;
    for (int d : e.shape) os << " " << d;
    os << "\n";
  }
  os << "end\n";
  for (const auto& e : entries) detail::write_f32_block(os, e.data, e.count);
  if (!os) throw data_error("write failure while saving checkpoint: " + path);
}

struct CheckpointInfo {
  long long step = 0;
  std::map<std::string, std::string> config;
};

// Reads the header only; used to reconstruct the model configuration before
// loading tensors.
inline CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(is, line) || line != detail::kCheckpointMagic)
    throw data_error("bad checkpoint magic in " + path + ": expected '" + std::string(detail::kCheckpointMagic) +
                     "', got '" + line.substr(0, 32) + "'");
  CheckpointInfo info;
  while (std::getline(is, line)) {
    if (line == "end") return info;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "step") {
      ls >> info.step;
    } else if (tag == "config") {
      std::string key, value;
      ls >> key >> value;
      info.config[key] = value;
    } else if (tag == "tensor") {
      continue;
    } else {
      throw data_error("unrecognized checkpoint header line: '" + line + "'");
    }
  }
  throw data_error("checkpoint truncated: header has no 'end' marker");
}

// Fills an already-registered parameter store (and optimizer state) from the
// payload. Every tensor in the file must match a registered parameter by
// name and shape, and every parameter must be present.
inline CheckpointInfo load_checkpoint(const std::string& path, ParamStore<float>& params, AdamState<float>* adam) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(is, line) || line != detail::kCheckpointMagic)
    throw data_error("bad checkpoint magic in " + path + ": expected '" + std::string(detail::kCheckpointMagic) +
                     "', got '" + line.substr(0, 32) + "'");
  CheckpointInfo info;
  std::vector<detail::TensorEntry> entries;
  bool saw_end = false;
  while (std::getline(is, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "step") {
      ls >> info.step;
    } else if (tag == "config") {
      std::string key, value;
      ls >> key >> value;
      info.config[key] = value;
    } else if (tag == "tensor") {
      detail::TensorEntry e;
      ls >> e.name;
      int d;
      while (ls >> d) e.shape.push_back(d);
      if (e.name.empty() || e.shape.empty()) throw data_error("malformed tensor header line: '" + line + "'");
      e.count = static_cast<size_t>(numel(e.shape));
      entries.push_back(std::move(e));
    } else {
      throw data_error("unrecognized checkpoint header line: '" + line + "'");
    }
  }
  if (!saw_end) throw data_error("checkpoint truncated: header has no 'end' marker");

  std::map<std::string, bool> filled;
  for (const auto& n : params.names()) filled[n] = false;
  if (adam) {
    adam->m.clear();
    adam->v.clear();
    adam->step = info.step;
  }
  for (const auto& e : entries) {
    std::string base = e.name;
    std::vector<float>* moment = nullptr;
    bool is_moment = false;
    if (base.rfind("adam.m.", 0) == 0) {
      base = base.substr(7);
      is_moment = true;
      if (adam) moment = &adam->m[base];
    } else if (base.rfind("adam.v.", 0) == 0) {
      base = base.substr(7);
      is_moment = true;
      if (adam) moment = &adam->v[base];
    }
    if (!params.contains(base))
      throw data_error("checkpoint tensor '" + e.name + "' does not match any model parameter");
    auto& p = params.at(base);
    if (e.shape != p.shape())
      throw data_error("checkpoint shape mismatch for '" + e.name + "': file has " + shape_str(e.shape) +
                       ", model has " + shape_str(p.shape()));
    if (moment) {
      moment->resize(e.count);
      detail::read_f32_block(is, moment->data(), e.count, e.name);
    } else if (!is_moment) {
      detail::read_f32_block(is, p.data(), e.count, e.name);
      filled[base] = true;
    } else {
      // Moment tensor but no optimizer state requested: skip the payload.
      std::vector<float> scratch(e.count);
      detail::read_f32_block(is, scratch.data(), e.count, e.name);
    }
  }
  for (const auto& [name, ok] : filled)
    if (!ok) throw data_error("checkpoint is missing tensor '" + name + "'");
  return info;
}

}  // namespace multinet
