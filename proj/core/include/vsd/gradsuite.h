#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vsd::gradsuite {

struct Entry {
    std::string name;
    double max_rel_error = 0.0;
    int64_t coords = 0;
};

// Finite-difference verification of every differentiable operation: tensor
// primitives, attention, temporal conv, the STI layer, the denoiser
// end-to-end at toy size, and the VQ prior.
std::vector<Entry> run_suite(uint64_t seed);

double worst_error(const std::vector<Entry>& entries);

}  // namespace vsd::gradsuite
