#pragma once

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lrd/commands.hpp"
#include "lrd/decompose.hpp"
#include "lrd/weights.hpp"

namespace support {

inline std::string fixture(const std::string& name) { return std::string(LRD_FIXTURE_DIR) + "/" + name; }

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline std::size_t pick(std::mt19937_64& g, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(g);
}

/// Random factors with orthonormal first / last (QR of random matrices).
inline lrd::TuckerFactors orthonormal_factors(std::mt19937_64& g, std::size_t c, std::size_t s, std::size_t k,
                                              std::size_t r1, std::size_t r2) {
  using lrd::Matrix;
  const Matrix a = lrd::random_matrix(g, static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r1));
  const Matrix b = lrd::random_matrix(g, static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(r2));
  Eigen::HouseholderQR<Matrix> qa(a), qb(b);
  Matrix first = qa.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r1));
  Matrix last_t = qb.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(r2));
  return {first, lrd::random_tensor(g, lrd::Dims4{r1, r2, k, k}), last_t.transpose()};
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

inline CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = lrd::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("lrd_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace support
