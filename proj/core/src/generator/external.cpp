#include "augsynth/generator/external.hpp"

#include <cmath>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace augsynth::gen {

using nlohmann::json;

std::string encode_request(const ConditioningBundle& bundle, const GenerationConfig& cfg, const std::string& key) {
  json j;
  j["version"] = 1;
  j["request_key"] = key;
  j["class_text"] = bundle.class_text;
  j["class_label"] = bundle.class_label;
  j["image_embedding"] = bundle.image_embedding.values;
  j["encoder_id"] = bundle.image_embedding.encoder_id;
  j["cfg"] = {{"cfg_scale", cfg.cfg_scale},
              {"steps", cfg.steps},
              {"seed", std::to_string(cfg.seed)},
              {"batch", cfg.batch}};
  return j.dump();
}

HttpTransport::HttpTransport(std::string host, int port, std::string path, double timeout_seconds)
    : host_(std::move(host)), port_(port), path_(std::move(path)), timeout_(timeout_seconds) {
  if (port_ <= 0 || port_ > 65535) throw ConfigError("invalid generator port " + std::to_string(port_));
  if (!(timeout_ > 0.0)) throw ConfigError("generator timeout must be positive");
}

std::string HttpTransport::post(const std::string& body) {
  httplib::Client client(host_, port_);
  const auto secs = static_cast<time_t>(timeout_);
  const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  auto res = client.Post(path_, body, "application/json");
  if (!res) {
    throw TransportUnavailable("cannot reach " + host_ + ":" + std::to_string(port_) + path_ + " (" +
                               httplib::to_string(res.error()) + ")");
  }
  if (res->status >= 500 || res->status == 429)
    throw TransportUnavailable("generator endpoint returned HTTP " + std::to_string(res->status));
  if (res->status != 200) throw DataError("generator endpoint returned HTTP " + std::to_string(res->status));
  return res->body;
}

ExternalGenerator::ExternalGenerator(std::shared_ptr<Transport> transport, std::string endpoint_id, int height,
                                     int width, int channels)
    : transport_(std::move(transport)), endpoint_id_(std::move(endpoint_id)), height_(height), width_(width),
      channels_(channels) {
  if (!transport_) throw ParameterError("ExternalGenerator needs a transport");
  if (height_ <= 0 || width_ <= 0 || (channels_ != 1 && channels_ != 3))
    throw ParameterError("invalid external generator image shape");
}

std::vector<ImageSample> ExternalGenerator::generate(const ConditioningBundle& bundle, const GenerationConfig& cfg) {
  if (cfg.batch <= 0 || cfg.steps <= 0 || !(cfg.cfg_scale >= 0.0))
    throw ParameterError("invalid generation config for external generator");
  const auto key = request_key(bundle, cfg, id());
  ++calls_;
  std::string body;
  try {
    body = transport_->post(encode_request(bundle, cfg, key));
  } catch (const TransportUnavailable& e) {
    throw GenerationError(std::string("generator unavailable: ") + e.what(), true, key);
  } catch (const DataError& e) {
    throw GenerationError(std::string("generator rejected request: ") + e.what(), false, key);
  }

  auto fail = [&](const std::string& what) { throw GenerationError("malformed generator response: " + what, false, key); };
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    fail(e.what());
  }
  if (!j.is_object() || !j.contains("images") || !j["images"].is_array()) fail("missing images array");
  const auto& arr = j["images"];
  if (arr.size() != static_cast<std::size_t>(cfg.batch))
    fail("expected " + std::to_string(cfg.batch) + " images, got " + std::to_string(arr.size()));
  std::vector<Image> images;
  for (const auto& im : arr) {
    if (!im.is_object()) fail("image entry is not an object");
    int h = 0, w = 0, c = 0;
    try {
      h = im.at("height").get<int>();
      w = im.at("width").get<int>();
      c = im.at("channels").get<int>();
    } catch (const json::exception& e) {
      fail(e.what());
    }
    if (h != height_ || w != width_ || c != channels_)
      fail("image shape " + std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c) + ", expected " +
           std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_));
    if (!im.contains("pixels") || !im["pixels"].is_array() ||
        im["pixels"].size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c))
      fail("pixel array has the wrong length");
    Image img(h, w, c);
    std::size_t i = 0;
    for (const auto& v : im["pixels"]) {
      if (!v.is_number()) fail("non-numeric pixel");
      const double p = v.get<double>();
      if (!std::isfinite(p) || p < 0.0 || p > 1.0) fail("pixel outside [0,1]");
      img.pixels()[i++] = static_cast<float>(p);
    }
    images.push_back(std::move(img));
  }
  return make_synthetic_samples(std::move(images), bundle, cfg, key);
}

std::vector<ImageSample> external_generate(ExternalGenerator& adapter, SyntheticCache& cache,
                                           const ConditioningBundle& bundle, const GenerationConfig& cfg) {
  CachedGenerator cached(adapter, cache);
  return cached.generate(bundle, cfg);
}

}  // namespace augsynth::gen
