#include "sarkit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sarkit/errors.hpp"

namespace sarkit {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'R', 'K', 'I', 'T', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw FormatError("checkpoint truncated in header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_doubles(std::ostream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

void get_doubles(std::istream& in, std::span<double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw FormatError("checkpoint truncated in tensor payload");
    }
  } else {
    for (double& v : values) v = std::bit_cast<double>(get_u64(in));
  }
}

}  // namespace

void save_checkpoint(std::ostream& out, SarModel& model, const TrainConfig& config) {
  const ModelConfig& mc = model.config();
  nlohmann::ordered_json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = train_config_to_json(config);
  header["model"] = {{"variant", variant_name(mc.encoder.variant)},
                     {"output", output_name(mc.output)},
                     {"embedding_dim", mc.embedding_dim},
                     {"word_hidden", mc.encoder.word_hidden},
                     {"conv_hidden", mc.encoder.conv_hidden},
                     {"depth", mc.encoder.depth},
                     {"dropout_rate", mc.encoder.dropout_rate},
                     {"disc_hidden", mc.disc_hidden},
                     {"with_discriminator", mc.with_discriminator},
                     {"freeze_embeddings", mc.freeze_embeddings}};
  header["vocab"] = model.vocab().tokens();
  header["tags"] = std::vector<std::string>(kTagNames.begin(), kTagNames.end());
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  const auto params = model.parameters();
  for (const Parameter* p : params) {
    manifest.push_back({{"name", p->name},
                        {"shape", p->value.shape()},
                        {"offset", offset},
                        {"count", p->value.size()}});
    offset += p->value.size() * sizeof(double);
  }
  header["tensors"] = std::move(manifest);

  const std::string text = header.dump();
  out.write(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : params) put_doubles(out, p->value.values());
  if (!out) throw FormatError("failed to write checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, SarModel& model, const TrainConfig& config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  save_checkpoint(out, model, config);
}

std::string checkpoint_bytes(SarModel& model, const TrainConfig& config) {
  std::ostringstream out(std::ios::binary);
  save_checkpoint(out, model, config);
  return out.str();
}

Checkpoint load_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("not a sarkit checkpoint (bad magic)");
  }
  const std::uint64_t length = get_u64(in);
  if (length > (std::uint64_t{1} << 34)) throw FormatError("checkpoint header length is implausible");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
    throw FormatError("checkpoint truncated in header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("checkpoint format version " + std::to_string(version) +
                        " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto tags = header.at("tags").get<std::vector<std::string>>();
    if (tags != std::vector<std::string>(kTagNames.begin(), kTagNames.end())) {
      throw FormatError("checkpoint tag codebook does not match SU, R, Q, P, ST");
    }
    Checkpoint ck;
    ck.config = parse_train_config(header.at("config"));
    const auto& m = header.at("model");
    ModelConfig mc;
    mc.encoder.variant = parse_variant(m.at("variant").get<std::string>());
    mc.output = parse_output(m.at("output").get<std::string>());
    mc.embedding_dim = m.at("embedding_dim").get<std::size_t>();
    mc.encoder.word_hidden = m.at("word_hidden").get<std::size_t>();
    mc.encoder.conv_hidden = m.at("conv_hidden").get<std::size_t>();
    mc.encoder.depth = m.at("depth").get<std::size_t>();
    mc.encoder.dropout_rate = m.at("dropout_rate").get<double>();
    mc.disc_hidden = m.at("disc_hidden").get<std::size_t>();
    mc.with_discriminator = m.at("with_discriminator").get<bool>();
    mc.freeze_embeddings = m.at("freeze_embeddings").get<bool>();
    Vocabulary vocab(header.at("vocab").get<std::vector<std::string>>());
    ck.model = SarModel(mc, std::move(vocab), 0);

    const auto& manifest = header.at("tensors");
    auto params = ck.model.parameters();
    if (manifest.size() != params.size()) {
      throw FormatError("checkpoint lists " + std::to_string(manifest.size()) +
                        " tensors, model expects " + std::to_string(params.size()));
    }
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& entry = manifest[i];
      Parameter& p = *params[i];
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      if (name != p.name || shape != p.value.shape()) {
        throw FormatError("checkpoint tensor " + name + " " + to_string(shape) +
                          " does not match expected " + p.name + " " + to_string(p.value.shape()));
      }
      if (entry.at("offset").get<std::uint64_t>() != offset) {
        throw FormatError("checkpoint tensor " + name + " has an unexpected offset");
      }
      get_doubles(in, p.value.values());
      offset += p.value.size() * sizeof(double);
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is malformed: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace sarkit
