#include "memvqa/feature_grid.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "memvqa/binary_io.hpp"

namespace memvqa {

namespace binary {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace binary

FeatureGrid parse_feature_grid(const std::string& bytes, const std::string& source) {
  using Kind = FeatureGridError::Kind;
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) {
    throw FeatureGridError(Kind::malformed_header, source + ": missing header line");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw FeatureGridError(Kind::malformed_header, source + ": header is not valid JSON: " + e.what());
  }
  std::size_t n = 0, d = 0;
  FeatureGrid grid;
  try {
    if (!header.is_object() || !header.at("n").is_number_unsigned() || !header.at("d").is_number_unsigned()) {
      throw FeatureGridError(Kind::malformed_header, source + ": header needs unsigned integer n and d");
    }
    n = header.at("n").get<std::size_t>();
    d = header.at("d").get<std::size_t>();
    const auto& id = header.at("image_id");
    grid.image_id = id.is_string() ? id.get<std::string>() : id.dump();
    if (header.at("dtype").get<std::string>() != "f32le") {
      throw FeatureGridError(Kind::malformed_header, source + ": unsupported dtype " + header.at("dtype").dump());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FeatureGridError(Kind::malformed_header, source + ": " + e.what());
  }
  if (n == 0 || d == 0) throw FeatureGridError(Kind::malformed_header, source + ": n and d must be positive");

  const std::size_t expected = n * d * 4;
  const std::size_t available = bytes.size() - newline - 1;
  if (available < expected) {
    throw FeatureGridError(Kind::truncated, source + ": payload has " + std::to_string(available) +
                                                " bytes, expected " + std::to_string(expected));
  }
  if (available > expected) {
    throw FeatureGridError(Kind::malformed_header, source + ": " + std::to_string(available - expected) +
                                                       " trailing bytes after payload");
  }
  std::vector<float> values(n * d);
  const char* p = bytes.data() + newline + 1;
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = binary::read_le<float>(p + 4 * i);
    if (!std::isfinite(values[i])) {
      throw FeatureGridError(Kind::non_finite, source + ": non-finite value at row " + std::to_string(i / d) +
                                                   ", column " + std::to_string(i % d));
    }
  }
  grid.regions = Tensor<float>::matrix(n, d, std::move(values));
  return grid;
}

FeatureGrid load_feature_grid(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = binary::read_file(path.string());
  } catch (const std::runtime_error& e) {
    throw FeatureGridError(FeatureGridError::Kind::io, e.what());
  }
  return parse_feature_grid(bytes, path.string());
}

std::string serialize_feature_grid(const FeatureGrid& grid) {
  nlohmann::ordered_json header = {{"image_id", grid.image_id},
                           {"n", grid.num_regions()},
                           {"d", grid.width()},
                           {"dtype", "f32le"}};
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + grid.regions.size() * 4);
  for (float v : grid.regions.data()) binary::append_le(out, v);
  return out;
}

void save_feature_grid(const std::filesystem::path& path, const FeatureGrid& grid) {
  binary::write_file(path.string(), serialize_feature_grid(grid));
}

}  // namespace memvqa
