#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "mgkd/data.hpp"
#include "mgkd/pipeline.hpp"

namespace mgkd::testing {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mgkd_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline data::SyntheticConfig small_synthetic(std::uint64_t seed = 0, std::size_t n = 3000) {
  data::SyntheticConfig c;
  c.n = n;
  c.d_pre = 6;
  c.d_in = 6;
  c.seed = seed;
  return c;
}

/// Split and standardized, ready for training.
inline data::TwoPhaseDataset small_dataset(std::uint64_t seed = 0, std::size_t n = 3000) {
  auto ds = data::temporal_split(data::generate_synthetic(small_synthetic(seed, n)), 0.1, 0.1);
  return data::apply_standardize(ds, data::fit_standardize(ds));
}

inline pipeline::DistillConfig small_train_config(std::uint64_t seed = 0) {
  pipeline::DistillConfig c;
  c.hidden_dims = {8, 8};
  c.batch_size = 256;
  c.max_epochs = 6;
  c.patience = 50;
  c.seed = seed;
  return c;
}

}  // namespace mgkd::testing
