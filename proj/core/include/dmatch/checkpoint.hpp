#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dmatch/tensor.hpp"

namespace dmatch {

// Named parameter list in a stable order; what save/load round-trips.
using NamedTensorList = std::vector<std::pair<std::string, Tensor>>;

// Versioned textual checkpoint:
//   dmatch-checkpoint 1
//   <entry count>
//   <name> <rows> <cols> <row-major values, %.17g>
// one entry per line. %.17g round-trips float64 exactly.
void save_checkpoint(const std::string& path, const NamedTensorList& entries);
NamedTensorList load_checkpoint(const std::string& path);

// Copies entries into the named destination tensors. Every destination name
// must be present with a matching shape; unused checkpoint entries are
// allowed (a full checkpoint can feed a sub-model).
void assign_from_checkpoint(const NamedTensorList& entries,
                            const std::vector<std::string>& names,
                            const std::vector<Tensor*>& dests);

}  // namespace dmatch
