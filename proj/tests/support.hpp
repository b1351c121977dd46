#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "siamft/siamft.hpp"

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("siamft-test-" + std::to_string(rd()) + std::to_string(rd()));
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

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Corpus with ids "e0", "e1", ... and the given labels; text defaults to the label.
inline siamft::Corpus make_corpus(const std::vector<std::string>& labels,
                                  const std::string& dataset = "toy",
                                  std::vector<std::string> texts = {}) {
  std::vector<siamft::LabeledExample> ex;
  for (std::size_t i = 0; i < labels.size(); ++i)
    ex.push_back({"e" + std::to_string(i), texts.empty() ? labels[i] + " text" : texts[i],
                  labels[i], dataset});
  return siamft::Corpus(dataset, std::move(ex));
}

inline siamft::Vector random_vector(std::size_t n, siamft::Rng& rng, double scale = 1.0) {
  siamft::Vector v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

}  // namespace testing_support
