#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fusenet/dataio.hpp"
#include "fusenet/fusenet.hpp"
#include "fusenet/training.hpp"

namespace fusenet::cli {

/// Flat key=value run configuration. Every key has a default; unknown keys
/// are rejected wherever values enter (file or flag).
class RunConfig {
 public:
  enum class Kind { String, Bool, Int, Real, IntList };
  struct Key {
    std::string name;
    Kind kind;
    std::string default_value;
    std::string help;
  };
  static const std::vector<Key>& keys();

  RunConfig();

  /// Schedule, width, depth, batch and crop of the full-size setup.
  void apply_paper_scale();
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  const std::string& str(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  double real(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;

  /// Commented file that merge_file reads back to the same values.
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

  model::FuseNetConfig model_config() const;
  train::TrainConfig train_config() const;
  dataio::SyntheticSceneConfig synthetic_config() const;

  std::filesystem::path out_dir() const { return str("out"); }
  /// `checkpoint` if set, else <out>/model.ckpt.
  std::filesystem::path checkpoint_path() const;

 private:
  const Key& lookup(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace fusenet::cli
