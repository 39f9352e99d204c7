#include "swinfree/model.hpp"

namespace swinfree {

std::int64_t count_params(const ModelConfig& cfg) {
  validate(cfg);
  const std::int64_t norm = 2;  // gain + shift per channel
  std::int64_t n = 0;
  const std::int64_t e = cfg.embed_dim;
  n += cfg.in_chans * cfg.patch_size * cfg.patch_size * e + e + norm * e;
  for (int s = 0; s < kNumStages; ++s) {
    const auto& st = cfg.stages[s];
    const std::int64_t c = cfg.stage_channels(s);
    const std::int64_t table = (2 * st.window - 1) * (2 * st.window - 1) * st.num_heads;
    const std::int64_t block = norm * c                 // norm1
                               + 3 * c * c + 3 * c      // qkv
                               + table                  // relative position bias
                               + c * c + c              // proj
                               + norm * c               // norm2
                               + kMlpRatio * c * c + kMlpRatio * c  // fc1
                               + kMlpRatio * c * c + c;             // fc2
    n += st.depth * block;
    if (s + 1 < kNumStages) n += norm * 4 * c + 4 * c * 2 * c;
  }
  const std::int64_t last = cfg.stage_channels(kNumStages - 1);
  n += norm * last + last * cfg.num_classes + cfg.num_classes;
  return n;
}

}  // namespace swinfree
