#include "sonarsweep/io.hpp"

#include "sonarsweep/errors.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sonarsweep {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "PFM and SSCV1 encoders assume a little-endian host");

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space_and_comments();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      out.push_back(bytes_[pos_++]);
    }
    if (out.empty()) throw InputDataError("image header truncated");
    return out;
  }

  long integer() {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const long value = std::stol(t, &used);
      if (used != t.size()) throw InputDataError("bad integer in image header: " + t);
      return value;
    } catch (const std::logic_error&) {
      throw InputDataError("bad integer in image header: " + t);
    }
  }

  double real() {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const double value = std::stod(t, &used);
      if (used != t.size()) throw InputDataError("bad number in image header: " + t);
      return value;
    } catch (const std::logic_error&) {
      throw InputDataError("bad number in image header: " + t);
    }
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw InputDataError("image header not terminated");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string encode_pnm(const Image<std::uint8_t>& image, const char* magic) {
  std::string out = std::string(magic) + "\n" + std::to_string(image.width()) + " " +
                    std::to_string(image.height()) + "\n255\n";
  const auto data = image.data();
  out.append(reinterpret_cast<const char*>(data.data()), data.size());
  return out;
}

void check_dims(long width, long height) {
  constexpr long kMaxDim = 1 << 16;
  if (width <= 0 || height <= 0 || width > kMaxDim || height > kMaxDim) {
    throw InputDataError("image dimensions out of range");
  }
}

}  // namespace

std::string encode_pgm(const Image<std::uint8_t>& image) {
  if (image.channels() != 1) throw InputDataError("PGM needs a single-channel image");
  return encode_pnm(image, "P5");
}

std::string encode_ppm(const Image<std::uint8_t>& image) {
  if (image.channels() != 3) throw InputDataError("PPM needs a three-channel image");
  return encode_pnm(image, "P6");
}

std::string encode_pfm(const Image<float>& image) {
  if (image.channels() != 1) throw InputDataError("PFM (Pf) needs a single-channel image");
  std::string out = "Pf\n" + std::to_string(image.width()) + " " +
                    std::to_string(image.height()) + "\n-1.0\n";
  const std::size_t row_bytes = static_cast<std::size_t>(image.width()) * sizeof(float);
  for (int v = image.height() - 1; v >= 0; --v) {
    const float* row = image.height() > 0 ? &image.at(0, v) : nullptr;
    out.append(reinterpret_cast<const char*>(row), row_bytes);
  }
  return out;
}

Image<std::uint8_t> decode_pnm(std::string_view bytes) {
  HeaderReader header(bytes);
  const std::string magic = header.token();
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw InputDataError("not a binary PGM/PPM file (magic '" + magic + "')");
  }
  const long width = header.integer();
  const long height = header.integer();
  const long maxval = header.integer();
  check_dims(width, height);
  if (maxval != 255) throw InputDataError("only 8-bit PGM/PPM (maxval 255) is supported");
  const std::size_t offset = header.raster_offset();
  Image<std::uint8_t> image(static_cast<int>(width), static_cast<int>(height), channels);
  const std::size_t needed = image.data().size();
  if (bytes.size() - offset != needed) {
    throw InputDataError("PGM/PPM raster has " + std::to_string(bytes.size() - offset) +
                         " bytes, expected " + std::to_string(needed));
  }
  std::memcpy(image.data().data(), bytes.data() + offset, needed);
  return image;
}

Image<float> decode_pfm(std::string_view bytes) {
  HeaderReader header(bytes);
  const std::string magic = header.token();
  if (magic != "Pf") throw InputDataError("not a single-channel PFM file (magic '" + magic + "')");
  const long width = header.integer();
  const long height = header.integer();
  const double scale = header.real();
  check_dims(width, height);
  if (scale == 0.0 || !std::isfinite(scale)) throw InputDataError("PFM scale must be nonzero");
  const bool little = scale < 0.0;
  const std::size_t offset = header.raster_offset();
  Image<float> image(static_cast<int>(width), static_cast<int>(height), 1);
  const std::size_t row_bytes = static_cast<std::size_t>(width) * sizeof(float);
  if (bytes.size() - offset != row_bytes * static_cast<std::size_t>(height)) {
    throw InputDataError("PFM raster size does not match its header");
  }
  for (long r = 0; r < height; ++r) {
    const int v = static_cast<int>(height - 1 - r);
    const char* src = bytes.data() + offset + static_cast<std::size_t>(r) * row_bytes;
    for (long u = 0; u < width; ++u) {
      std::uint32_t word = 0;
      std::memcpy(&word, src + u * sizeof(float), sizeof(float));
      if (!little) word = __builtin_bswap32(word);
      const float value = std::bit_cast<float>(word);
      if (!std::isfinite(value)) throw InputDataError("PFM contains non-finite values");
      image.at(static_cast<int>(u), v) = value;
    }
  }
  return image;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  const fs::path temp = path.string() + ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + temp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(temp, ec);
      throw ValidationError("failed writing '" + temp.string() + "'");
    }
  }
  fs::rename(temp, path);
}

Image<std::uint8_t> read_pnm(const fs::path& path) {
  try {
    return decode_pnm(read_file(path));
  } catch (const InputDataError& e) {
    throw InputDataError(path.string() + ": " + e.what());
  }
}

Image<float> read_pfm(const fs::path& path) {
  try {
    return decode_pfm(read_file(path));
  } catch (const InputDataError& e) {
    throw InputDataError(path.string() + ": " + e.what());
  }
}

nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputDataError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_pgm(const fs::path& path, const Image<std::uint8_t>& image) {
  write_file_atomic(path, encode_pgm(image));
}
void write_ppm(const fs::path& path, const Image<std::uint8_t>& image) {
  write_file_atomic(path, encode_ppm(image));
}
void write_pfm(const fs::path& path, const Image<float>& image) {
  write_file_atomic(path, encode_pfm(image));
}
void write_json(const fs::path& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

OutputTransaction::OutputTransaction(fs::path directory) : directory_(std::move(directory)) {}

OutputTransaction::~OutputTransaction() {
  if (committed_) return;
  std::error_code ec;
  for (const auto& [temp, final_path] : staged_) fs::remove(temp, ec);
  for (auto it = created_dirs_.rbegin(); it != created_dirs_.rend(); ++it) fs::remove(*it, ec);
}

void OutputTransaction::add(const std::string& name, std::string bytes) {
  const fs::path final_path = directory_ / name;
  const fs::path parent = final_path.parent_path();
  // Remember directories we create so a rollback can remove them again.
  std::vector<fs::path> missing;
  for (fs::path p = parent; !p.empty() && !fs::exists(p); p = p.parent_path()) {
    missing.push_back(p);
    if (p == p.parent_path()) break;
  }
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw ValidationError("cannot create directory '" + parent.string() + "'");
  created_dirs_.insert(created_dirs_.end(), missing.rbegin(), missing.rend());

  const fs::path temp = parent / ("." + final_path.filename().string() + ".partial");
  std::ofstream out(temp, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + temp.string() + "'");
  staged_.emplace_back(temp, final_path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw ValidationError("failed writing '" + temp.string() + "'");
}

void OutputTransaction::commit() {
  for (const auto& [temp, final_path] : staged_) fs::rename(temp, final_path);
  committed_ = true;
}

}  // namespace sonarsweep
