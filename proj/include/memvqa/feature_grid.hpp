#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "memvqa/tensor.hpp"

namespace memvqa {

// Region features {v_n} of one image: an N x Dv matrix, one row per region.
struct FeatureGrid {
  std::string image_id;
  Tensor<float> regions;

  std::size_t num_regions() const { return regions.rows(); }
  std::size_t width() const { return regions.cols(); }
};

class FeatureGridError : public std::runtime_error {
 public:
  enum class Kind { io, malformed_header, truncated, non_finite };

  FeatureGridError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// File layout: one UTF-8 JSON header line
//   {"image_id":..., "n":..., "d":..., "dtype":"f32le"}
// then n*d little-endian float32 values, row-major.
FeatureGrid load_feature_grid(const std::filesystem::path& path);
FeatureGrid parse_feature_grid(const std::string& bytes, const std::string& source = "<memory>");

void save_feature_grid(const std::filesystem::path& path, const FeatureGrid& grid);
std::string serialize_feature_grid(const FeatureGrid& grid);

}  // namespace memvqa
