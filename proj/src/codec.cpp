#include "dfa/codec.hpp"

#include <istream>
#include <ostream>

#include <openssl/evp.h>
#include <png.h>

namespace dfa {

std::vector<std::uint8_t> encode_png(const Observation& obs) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = Observation::kWidth;
  image.height = Observation::kHeight;
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  const auto raster = obs.raster();
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, raster.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, std::string("png sizing failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, raster.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

Observation decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::kIo, std::string("png decode failed: ") + image.message);
  }
  if (image.width != Observation::kWidth || image.height != Observation::kHeight) {
    png_image_free(&image);
    throw Error(ErrorCode::kShapeMismatch, "png frame must be 36x36");
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> raster(Observation::kSize);
  if (!png_image_finish_read(&image, nullptr, raster.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, std::string("png decode failed: ") + image.message);
  }
  return Observation(std::move(raster));
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::kIo, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorCode::kIo, "invalid base64 payload");
  // EVP_DecodeBlock keeps the zero bytes that stand in for '=' padding.
  std::size_t size = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --size;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --size;
  out.resize(size);
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr)) {
    throw Error(ErrorCode::kIo, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

Json to_json(const WorldState& state) { return {{"t", state.t}, {"scene", to_json(state.scene)}}; }

WorldState world_state_from_json(const Json& j) {
  return {scene_from_json(j.at("scene")), j.at("t").get<int>()};
}

std::string state_digest(const WorldState& state) {
  const std::string text = to_json(state).dump();
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string_view to_string(FrameEncoding encoding) { return encoding == FrameEncoding::kRaw ? "raw" : "png"; }

FrameEncoding parse_frame_encoding(std::string_view name) {
  if (name == "raw") return FrameEncoding::kRaw;
  if (name == "png") return FrameEncoding::kPng;
  throw Error(ErrorCode::kInvalidArgument, "unknown frame encoding '" + std::string(name) + "' (allowed: raw, png)");
}

Json frame_to_json(const Observation& obs, FrameEncoding encoding) {
  if (encoding == FrameEncoding::kRaw) return base64_encode(obs.raster());
  return base64_encode(encode_png(obs));
}

Observation frame_from_json(const Json& j, FrameEncoding encoding) {
  std::vector<std::uint8_t> bytes = base64_decode(j.get<std::string>());
  if (encoding == FrameEncoding::kRaw) return Observation(std::move(bytes));
  return decode_png(bytes);
}

void write_trajectory(std::ostream& out, const Trajectory& trajectory, FrameEncoding encoding) {
  const Json header{{"provenance", to_string(trajectory.provenance)},
                    {"domain", to_string(trajectory.domain())},
                    {"horizon", trajectory.steps.size()},
                    {"encoding", to_string(encoding)},
                    {"scene", to_json(trajectory.initial)}};
  out << header.dump() << '\n';
  for (const TrajectoryStep& s : trajectory.steps) {
    const Json line{{"t", s.state.t},
                    {"digest", state_digest(s.state)},
                    {"action", to_json(s.action)},
                    {"obs", frame_to_json(s.obs, encoding)}};
    out << line.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed to write trajectory");
}

Trajectory read_trajectory(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kIo, "trajectory file is empty");
  const Json header = Json::parse(line);
  const SceneDescriptor scene = scene_from_json(header.at("scene"));
  const FrameEncoding encoding = parse_frame_encoding(header.at("encoding").get<std::string>());
  std::vector<Action> actions;
  std::vector<Json> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json record = Json::parse(line);
    actions.push_back(action_from_json(record.at("action"), scene.domain));
    records.push_back(std::move(record));
  }
  Trajectory trajectory =
      replay(scene, actions, parse_provenance(header.at("provenance").get<std::string>()));
  for (std::size_t t = 0; t < records.size(); ++t) {
    const TrajectoryStep& s = trajectory.steps[t];
    if (records[t].at("digest").get<std::string>() != state_digest(s.state) ||
        frame_from_json(records[t].at("obs"), encoding) != s.obs) {
      throw Error(ErrorCode::kReplayDiverged, "recorded step " + std::to_string(t) + " does not match replay");
    }
  }
  return trajectory;
}

}  // namespace dfa
