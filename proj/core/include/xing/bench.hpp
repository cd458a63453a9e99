#pragma once

#include <vector>

#include "xing/attention.hpp"

namespace xing {

struct ScaleCost {
  std::size_t factor = 1;
  std::size_t height = 0, width = 0;  // pooled grid
  std::size_t tokens = 0;             // n_k
  std::size_t corr_entries = 0;       // n_k^2
  double seconds = 0;                 // best-of-reps correlation cost
};

struct AttentionBench {
  std::vector<ScaleCost> scales;
  double single_scale_seconds = 0;  // sa_forward
  double multi_scale_seconds = 0;   // emsa_forward
};

/// Per-scale correlation sizes and wall-clock for a [1,c,h,w] code.
AttentionBench bench_attention(std::size_t h, std::size_t w, const PyramidSpec& pyramid,
                               std::size_t channels = 32, std::size_t reps = 5);

}  // namespace xing
