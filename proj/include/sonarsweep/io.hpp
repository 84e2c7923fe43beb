#ifndef SONARSWEEP_IO_HPP
#define SONARSWEEP_IO_HPP

// Image and document formats:
//   PGM  binary "P5", 8-bit gray.
//   PPM  binary "P6", 8-bit RGB.
//   PFM  "Pf" single channel float32, scale -1.0 (little-endian), rows stored
//        bottom-to-top as in the reference format.
// All writers go through write_file_atomic or an OutputTransaction so a failed
// command never leaves a partially written file behind.

#include "sonarsweep/image.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sonarsweep {

std::string encode_pgm(const Image<std::uint8_t>& image);
std::string encode_ppm(const Image<std::uint8_t>& image);
std::string encode_pfm(const Image<float>& image);

/// Decoders throw InputDataError on malformed or truncated data.
Image<std::uint8_t> decode_pnm(std::string_view bytes);  // P5 or P6
Image<float> decode_pfm(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

Image<std::uint8_t> read_pnm(const std::filesystem::path& path);
Image<float> read_pfm(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

void write_pgm(const std::filesystem::path& path, const Image<std::uint8_t>& image);
void write_ppm(const std::filesystem::path& path, const Image<std::uint8_t>& image);
void write_pfm(const std::filesystem::path& path, const Image<float>& image);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Collects output files as staged temporaries and publishes them together.
/// Staged files that were never committed are removed on destruction.
class OutputTransaction {
 public:
  explicit OutputTransaction(std::filesystem::path directory);
  ~OutputTransaction();
  OutputTransaction(const OutputTransaction&) = delete;
  OutputTransaction& operator=(const OutputTransaction&) = delete;

  /// `name` is relative to the directory and may contain subdirectories.
  void add(const std::string& name, std::string bytes);
  void commit();

 private:
  std::filesystem::path directory_;
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_;
  std::vector<std::filesystem::path> created_dirs_;
  bool committed_ = false;
};

}  // namespace sonarsweep

#endif  // SONARSWEEP_IO_HPP
