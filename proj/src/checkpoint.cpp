#include "conformer/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "config_json.hpp"
#include "conformer/errors.hpp"

namespace conformer {

namespace {

constexpr std::array<char, 8> kMagic{'C', 'F', 'M', 'R', 'C', 'K', 'P', 'T'};
constexpr int kVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  detail::Json header;
  header["format"] = "conformer-checkpoint";
  header["version"] = kVersion;
  header["model"] = detail::model_to_json(ckpt.config);
  header["normalization"] = detail::stats_to_json(ckpt.stats);
  detail::Json params = detail::Json::array();
  for (std::size_t i = 0; i < ckpt.params.size(); ++i)
    params.push_back({{"name", ckpt.params.name(i)}, {"shape", ckpt.params.value(i).shape()}});
  header["params"] = params;
  const std::string text = header.dump();

  std::string out(kMagic.begin(), kMagic.end());
  put_u64(out, text.size());
  out += text;
  for (std::size_t i = 0; i < ckpt.params.size(); ++i)
    for (double v : ckpt.params.value(i).storage()) put_u64(out, std::bit_cast<std::uint64_t>(v));

  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw LoadError("cannot write checkpoint " + file.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw LoadError("write failed for checkpoint " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw LoadError("cannot open checkpoint " + file.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string where = file.filename().string() + ": ";
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw LoadError(where + "not a checkpoint (bad magic)");
  const std::uint64_t header_len = get_u64(p + 8);
  if (header_len > bytes.size() - 16) throw LoadError(where + "truncated header");

  Checkpoint ckpt;
  std::size_t offset = 16 + header_len;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(offset));
    if (header.at("format") != "conformer-checkpoint" || header.at("version") != kVersion)
      throw LoadError(where + "unsupported format or version");
    ckpt.config = detail::model_from_json(header.at("model"));
    ckpt.stats = detail::stats_from_json(header.at("normalization"));
    for (const auto& entry : header.at("params")) {
      const Shape shape = entry.at("shape").get<Shape>();
      const std::size_t count = shape_size(shape);
      if (count == 0 || (bytes.size() - offset) / 8 < count) throw LoadError(where + "truncated parameter data");
      std::vector<double> data(count);
      for (std::size_t i = 0; i < count; ++i, offset += 8) data[i] = std::bit_cast<double>(get_u64(p + offset));
      ckpt.params.add(entry.at("name").get<std::string>(), Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(where + "malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(where + e.what());
  }
  if (offset != bytes.size()) throw LoadError(where + "trailing bytes after parameter data");
  return ckpt;
}

}  // namespace conformer
