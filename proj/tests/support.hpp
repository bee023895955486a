#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "entfact/corpus.hpp"

namespace entfact::testing {

// Builds an annotated human document by matching the given surfaces.
inline Document make_doc(const std::string& id, const std::string& text,
                         const std::map<std::string, EntityType>& entities) {
  Document d;
  d.id = id;
  d.text = text;
  return annotate_entities(d, Gazetteer(entities));
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 counter(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("entfact_" + tag + "_" + std::to_string(counter()));
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

}  // namespace entfact::testing
