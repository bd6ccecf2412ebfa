#include "dmatch/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dmatch {

namespace {
constexpr const char* kMagic = "dmatch-checkpoint";
constexpr int kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const NamedTensorList& entries) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("save_checkpoint: cannot open " + path);
  out << kMagic << " " << kVersion << "\n" << entries.size() << "\n";
  char buf[64];
  for (const auto& [name, t] : entries) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
      throw std::invalid_argument("save_checkpoint: invalid tensor name '" + name + "'");
    out << name << " " << t.rows() << " " << t.cols();
    for (int i = 0; i < t.rows(); ++i)
      for (int j = 0; j < t.cols(); ++j) {
        std::snprintf(buf, sizeof(buf), " %.17g", t.at(i, j));
        out << buf;
      }
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

NamedTensorList load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_checkpoint: cannot open " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic)
    throw std::invalid_argument("load_checkpoint: bad magic in " + path);
  if (version != kVersion)
    throw std::invalid_argument("load_checkpoint: unsupported version " +
                                std::to_string(version));
  size_t count = 0;
  in >> count;
  if (in.fail()) throw std::invalid_argument("load_checkpoint: malformed header");
  NamedTensorList entries;
  std::set<std::string> seen;
  for (size_t e = 0; e < count; ++e) {
    std::string name;
    int rows = 0, cols = 0;
    in >> name >> rows >> cols;
    if (in.fail() || rows < 1 || cols < 1)
      throw std::invalid_argument("load_checkpoint: malformed entry " + std::to_string(e));
    if (!seen.insert(name).second)
      throw std::invalid_argument("load_checkpoint: duplicate tensor '" + name + "'");
    Tensor t(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) in >> t.at(i, j);
    if (in.fail())
      throw std::invalid_argument("load_checkpoint: short values for '" + name + "'");
    entries.emplace_back(std::move(name), std::move(t));
  }
  return entries;
}

void assign_from_checkpoint(const NamedTensorList& entries,
                            const std::vector<std::string>& names,
                            const std::vector<Tensor*>& dests) {
  if (names.size() != dests.size())
    throw std::invalid_argument("assign_from_checkpoint: name/tensor count mismatch");
  for (size_t i = 0; i < names.size(); ++i) {
    const Tensor* src = nullptr;
    for (const auto& [name, t] : entries)
      if (name == names[i]) {
        src = &t;
        break;
      }
    if (!src)
      throw std::invalid_argument("assign_from_checkpoint: missing tensor '" + names[i] + "'");
    if (!src->same_shape(*dests[i]))
      throw std::invalid_argument("assign_from_checkpoint: shape mismatch for '" + names[i] +
                                  "': " + src->shape_string() + " vs " +
                                  dests[i]->shape_string());
    *dests[i] = *src;
  }
}

}  // namespace dmatch
