#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridgelab/param.hpp"

namespace bridgelab {

// Saved parameter set with its provenance (the stage names that produced it,
// oldest first) and the config fingerprint it was trained under.
struct Checkpoint {
    uint64_t fingerprint = 0;
    std::vector<std::string> provenance;
    ParamStore params;
};

// Order-stable content hash over names, flags, shapes, and payload bytes.
// Used to prove frozen stores are bitwise untouched.
uint64_t params_hash(const ParamStore& ps);

// Binary format: magic + version header, payload, trailing checksum. Loading
// verifies all three and reproduces the store bitwise.
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace bridgelab
