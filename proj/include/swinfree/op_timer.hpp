#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>

namespace swinfree {

/// Accumulates wall time per operation category during a forward pass.
/// Categories are disjoint; nested scopes must not overlap.
class OpTimer {
 public:
  using Clock = std::chrono::steady_clock;

  void add(const std::string& category, double seconds) { seconds_[category] += seconds; }
  void count(const std::string& key, std::int64_t n) { counters_[key] += n; }
  void set(const std::string& key, std::int64_t n) { counters_[key] = n; }

  const std::map<std::string, double>& seconds() const { return seconds_; }
  const std::map<std::string, std::int64_t>& counters() const { return counters_; }

  void clear() {
    seconds_.clear();
    counters_.clear();
  }

 private:
  std::map<std::string, double> seconds_;
  std::map<std::string, std::int64_t> counters_;
};

/// RAII scope; a null timer makes it a no-op.
class TimedScope {
 public:
  TimedScope(OpTimer* timer, const char* category) : timer_(timer), category_(category) {
    if (timer_) start_ = OpTimer::Clock::now();
  }
  ~TimedScope() {
    if (timer_) {
      timer_->add(category_,
                  std::chrono::duration<double>(OpTimer::Clock::now() - start_).count());
    }
  }
  TimedScope(const TimedScope&) = delete;
  TimedScope& operator=(const TimedScope&) = delete;

 private:
  OpTimer* timer_;
  const char* category_;
  OpTimer::Clock::time_point start_{};
};

namespace op {
inline constexpr const char* kShift = "shift";
inline constexpr const char* kWindowReshape = "window_reshape";
inline constexpr const char* kMaskBuild = "mask_build";
inline constexpr const char* kQkvProj = "qkv_proj";
inline constexpr const char* kAttentionMatmul = "attention_matmul";
inline constexpr const char* kSoftmax = "softmax";
inline constexpr const char* kOutProj = "out_proj";
inline constexpr const char* kNorm = "norm";
inline constexpr const char* kActivation = "activation";
inline constexpr const char* kMlpMatmul = "mlp_matmul";
inline constexpr const char* kResidual = "residual";
inline constexpr const char* kMerge = "merge";
inline constexpr const char* kEmbed = "embed";
inline constexpr const char* kHead = "head";
}  // namespace op

}  // namespace swinfree
