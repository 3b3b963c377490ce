#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "daf/corpus.hpp"
#include "daf/scoring.hpp"

namespace fixtures {

inline daf::Question make_question(std::string id, int answer_index = 0,
                                   std::vector<std::string> options = {"alpha", "beta", "gamma",
                                                                       "delta"}) {
  daf::Question q;
  q.id = std::move(id);
  q.context = "context for " + q.id;
  q.question = "question for " + q.id;
  q.options = std::move(options);
  q.answer_index = answer_index;
  return q;
}

// Temp directory cleaned up on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    dir_ = std::filesystem::temp_directory_path() /
           ("daf_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return dir_; }

  std::filesystem::path write(const std::string& name, const std::string& content) const {
    const auto p = dir_ / name;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace fixtures
