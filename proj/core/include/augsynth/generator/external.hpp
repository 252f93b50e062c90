#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "augsynth/error.hpp"
#include "augsynth/generator/generator.hpp"

namespace augsynth::gen {

/// Wire format of the external-generator adapter (JSON):
///   request  {"version":1, "request_key", "class_text", "class_label",
///             "image_embedding":[...], "encoder_id",
///             "cfg":{"cfg_scale","steps","seed","batch"}}
///   response {"images":[{"height","width","channels","pixels":[...]}]}
std::string encode_request(const ConditioningBundle& bundle, const GenerationConfig& cfg, const std::string& key);

/// Transport failure that may succeed on retry (connection refused, 5xx).
class TransportUnavailable : public Error {
 public:
  using Error::Error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// Sends a request body and returns the response body.
  virtual std::string post(const std::string& body) = 0;
};

/// POSTs the JSON request to http://host:port/path.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string host, int port, std::string path = "/generate", double timeout_seconds = 120.0);
  std::string post(const std::string& body) override;

 private:
  std::string host_;
  int port_;
  std::string path_;
  double timeout_;
};

/// Adapter for a pretrained generator behind a Transport. Unavailable
/// endpoints surface as retriable GenerationErrors carrying the request key;
/// malformed or wrongly sized responses are fatal.
class ExternalGenerator final : public GeneratorInterface {
 public:
  ExternalGenerator(std::shared_ptr<Transport> transport, std::string endpoint_id, int height, int width,
                    int channels);

  std::vector<ImageSample> generate(const ConditioningBundle& bundle, const GenerationConfig& cfg) override;
  std::string id() const override { return "external:" + endpoint_id_; }

  std::uint64_t calls() const noexcept { return calls_.load(); }

 private:
  std::shared_ptr<Transport> transport_;
  std::string endpoint_id_;
  int height_, width_, channels_;
  std::atomic<std::uint64_t> calls_{0};
};

/// external_generate: the adapter behind the cache.
std::vector<ImageSample> external_generate(ExternalGenerator& adapter, SyntheticCache& cache,
                                           const ConditioningBundle& bundle, const GenerationConfig& cfg);

}  // namespace augsynth::gen
