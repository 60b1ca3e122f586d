#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cadnerf/autodiff.hpp"

namespace cadnerf::ad {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with named parameters arranged in groups. Groups can be stepped
/// independently; a group that is not stepped keeps its values and moments
/// bit-identical.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void add(const std::string& name, Tensor param, const std::string& group = "default");
  void zero_grad();
  /// Steps all parameters whose group is listed (all groups when empty).
  void step(const std::vector<std::string>& groups = {});

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }

  struct Slot {
    std::string name;
    std::string group;
    Tensor param;
    Matrix m;
    Matrix v;
    std::int64_t t = 0;
  };
  const std::vector<Slot>& slots() const { return slots_; }
  std::vector<Slot>& slots() { return slots_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  AdamConfig config_;
  std::vector<Slot> slots_;
  std::int64_t steps_ = 0;
};

/// Flat binary checkpoint: 8-byte magic, u64 header length, JSON header
/// (names, shapes, dtype, step), then float64 little-endian payload.
struct Checkpoint {
  std::int64_t step = 0;
  std::map<std::string, Matrix> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Adds parameter values and Adam moments of `optimizer` into a checkpoint.
void export_optimizer(const Adam& optimizer, Checkpoint& checkpoint);
/// Restores values (and moments when present) by name.
void import_optimizer(Adam& optimizer, const Checkpoint& checkpoint);

}  // namespace cadnerf::ad
