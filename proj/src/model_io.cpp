// SPDX-License-Identifier: Apache-2.0
#include <fmt/format.h>
#include <zlib.h>

#include <bit>
#include <charconv>
#include <sstream>

#include "procrnn/errors.hpp"
#include "procrnn/fileio.hpp"
#include "procrnn/training.hpp"

namespace procrnn {

namespace {

constexpr std::string_view kMagic = "procrnn-model";

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  const char* p = bytes.data();
  std::size_t left = bytes.size();
  while (left > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(p), chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw IntegrityError("model file is truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    value |= static_cast<T>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  pos += sizeof(T);
  return value;
}

std::string escape_token(std::string_view token) {
  std::string out;
  for (char c : token) {
    if (c == '%' || c == '\n' || c == '\r') {
      out += fmt::format("%{:02X}", static_cast<unsigned char>(c));
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string unescape_token(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%' && i + 2 < text.size()) {
      unsigned value = 0;
      auto [p, ec] = std::from_chars(text.data() + i + 1, text.data() + i + 3, value, 16);
      if (ec != std::errc{} || p != text.data() + i + 3) throw ModelError("bad token escape in model file");
      out.push_back(static_cast<char>(value));
      i += 2;
    } else if (text[i] == '%') {
      throw ModelError("bad token escape in model file");
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

std::string join_fractions(const std::vector<double>& fractions) {
  std::string out;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += fmt::format("{}", fractions[i]);
  }
  return out;
}

/// Line-oriented reader over the text header.
class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view line() {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string_view::npos) throw IntegrityError("model header is truncated");
    std::string_view l = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return l;
  }

  /// Reads `key value` and returns value.
  std::string_view field(std::string_view key) {
    std::string_view l = line();
    if (l.size() < key.size() + 1 || l.substr(0, key.size()) != key || l[key.size()] != ' ')
      throw ModelError("model header: expected '" + std::string(key) + "'");
    return l.substr(key.size() + 1);
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
  T value{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw ModelError("model header: bad value for " + std::string(what));
  return value;
}

std::vector<double> parse_fractions(std::string_view text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(parse_number<double>(text.substr(start, end - start), "prefix_fractions"));
    start = end + 1;
  }
  return out;
}

}  // namespace

std::string serialize(const ModelBundle& bundle) {
  const TrainConfig& c = bundle.config;
  std::string out;
  out += fmt::format("{}\nformat_version {}\n", kMagic, ModelBundle::kFormatVersion);
  out += fmt::format("cell {}\n", to_string(c.cell));
  out += fmt::format("hidden_size {}\nlayers {}\n", c.hidden_size, c.layers);
  out += fmt::format("vocab_limit {}\n", c.vocab_size ? std::to_string(*c.vocab_size) : "none");
  out += fmt::format("truncate_unknown_runs {}\n", c.truncate_unknown_runs ? 1 : 0);
  out += fmt::format("batch_size {}\niterations {}\ntraces_per_iteration {}\n", c.batch_size,
                     c.iterations, c.traces_per_iteration);
  out += fmt::format("learning_rate {}\nclip_norm {}\nseed {}\n", c.learning_rate, c.clip_norm, c.seed);
  out += fmt::format("prefix_fractions {}\ntrain_prefix_fraction {}\n", join_fractions(c.prefix_fractions),
                     c.train_prefix_fraction);
  out += fmt::format("iterations_run {}\nbest_iteration {}\nbest_accuracy {}\n",
                     bundle.summary.iterations_run, bundle.summary.best_iteration,
                     bundle.summary.best_accuracy);
  out += fmt::format("vocabulary {}\n", bundle.vocab.size());
  for (const auto& t : bundle.vocab.tokens()) out += escape_token(t) + "\n";
  const auto tensors = bundle.params.tensors();
  out += fmt::format("tensors {}\nend_header\n", tensors.size());

  for (const Matrix* m : tensors) {
    put_le<std::uint64_t>(out, m->size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m->rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m->cols()));
    for (double v : m->values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  put_le<std::uint32_t>(out, crc_of(out));
  return out;
}

ModelBundle deserialize(std::string_view bytes) {
  HeaderReader header(bytes);
  if (header.line() != kMagic) throw ModelError("not a model file");
  const auto version = parse_number<unsigned>(header.field("format_version"), "format_version");
  if (version != ModelBundle::kFormatVersion)
    throw UnsupportedVersionError(version, ModelBundle::kFormatVersion);

  if (bytes.size() < 4) throw IntegrityError("model file is truncated");
  std::size_t crc_pos = bytes.size() - 4;
  const auto stored = get_le<std::uint32_t>(bytes, crc_pos);
  if (stored != crc_of(bytes.substr(0, bytes.size() - 4)))
    throw IntegrityError("model file checksum mismatch (truncated or corrupted)");
  const std::string_view body = bytes.substr(0, bytes.size() - 4);

  ModelBundle b;
  TrainConfig& c = b.config;
  try {
    c.cell = parse_cell_kind(header.field("cell"));
  } catch (const ConfigError& e) {
    throw ModelError(e.what());
  }
  c.hidden_size = parse_number<std::size_t>(header.field("hidden_size"), "hidden_size");
  c.layers = parse_number<std::size_t>(header.field("layers"), "layers");
  const auto limit = header.field("vocab_limit");
  if (limit != "none") c.vocab_size = parse_number<std::size_t>(limit, "vocab_limit");
  c.truncate_unknown_runs = parse_number<int>(header.field("truncate_unknown_runs"), "truncate") != 0;
  c.batch_size = parse_number<std::size_t>(header.field("batch_size"), "batch_size");
  c.iterations = parse_number<std::size_t>(header.field("iterations"), "iterations");
  c.traces_per_iteration =
      parse_number<std::size_t>(header.field("traces_per_iteration"), "traces_per_iteration");
  c.learning_rate = parse_number<double>(header.field("learning_rate"), "learning_rate");
  c.clip_norm = parse_number<double>(header.field("clip_norm"), "clip_norm");
  c.seed = parse_number<std::uint64_t>(header.field("seed"), "seed");
  c.prefix_fractions = parse_fractions(header.field("prefix_fractions"));
  c.train_prefix_fraction = parse_number<double>(header.field("train_prefix_fraction"), "train_prefix_fraction");
  b.summary.iterations_run = parse_number<std::size_t>(header.field("iterations_run"), "iterations_run");
  b.summary.best_iteration = parse_number<std::size_t>(header.field("best_iteration"), "best_iteration");
  b.summary.best_accuracy = parse_number<double>(header.field("best_accuracy"), "best_accuracy");

  const auto vocab_count = parse_number<std::size_t>(header.field("vocabulary"), "vocabulary");
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < vocab_count; ++i) tokens.push_back(unescape_token(header.line()));
  try {
    b.vocab = Vocabulary::from_tokens(std::move(tokens), c.vocab_size);
  } catch (const ConfigError& e) {
    throw ModelError(e.what());
  }

  const auto tensor_count = parse_number<std::size_t>(header.field("tensors"), "tensors");
  if (header.line() != "end_header") throw ModelError("model header: missing end_header");

  // Shapes follow from the configuration; the stored shapes must agree.
  try {
    b.params = init_params(c.cell, b.vocab.size(), c.hidden_size, c.layers, 0);
  } catch (const ConfigError& e) {
    throw ModelError(std::string("model header: ") + e.what());
  }
  auto tensors = b.params.tensors();
  if (tensors.size() != tensor_count) throw ModelError("model file has an unexpected tensor count");

  std::size_t pos = header.position();
  for (Matrix* m : tensors) {
    const auto count = get_le<std::uint64_t>(body, pos);
    const auto rows = get_le<std::uint32_t>(body, pos);
    const auto cols = get_le<std::uint32_t>(body, pos);
    if (rows != m->rows() || cols != m->cols() || count != m->size())
      throw ModelError("model tensor shape does not match the configuration (vocabulary size " +
                       std::to_string(b.vocab.size()) + ")");
    for (double& v : m->values()) v = std::bit_cast<double>(get_le<std::uint64_t>(body, pos));
  }
  if (pos != body.size()) throw IntegrityError("model file has trailing bytes");
  return b;
}

void save(const ModelBundle& bundle, const std::filesystem::path& path) {
  const std::string bytes = serialize(bundle);
  write_file_atomically(path, [&](std::ostream& out) { out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); });
}

ModelBundle load(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const std::runtime_error& e) {
    throw ModelError(e.what());
  }
  return deserialize(bytes);
}

}  // namespace procrnn
