#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <cmath>
#include <thread>

#include "augsynth/generator/external.hpp"
#include "test_support.hpp"

// After Eigen: <resolv.h> (pulled in by httplib) defines a `_res` macro.
#include <httplib.h>

using namespace augsynth;
using namespace augsynth::gen;
using nlohmann::json;

namespace {

// Answers each request with `batch` flat gray images, optionally tampered.
std::string reply(const std::string& request, int extra_images = 0, int height = 4) {
  const auto req = json::parse(request);
  const int batch = req["cfg"]["batch"].get<int>();
  json images = json::array();
  for (int i = 0; i < batch + extra_images; ++i)
    images.push_back({{"height", height}, {"width", 4}, {"channels", 1},
                      {"pixels", std::vector<double>(static_cast<std::size_t>(height) * 4, 0.25 + 0.1 * i)}});
  return json{{"images", images}}.dump();
}

class FakeTransport final : public Transport {
 public:
  std::function<std::string(const std::string&)> handler = [](const std::string& r) { return reply(r); };
  std::vector<std::string> seen;
  std::string post(const std::string& body) override {
    seen.push_back(body);
    return handler(body);
  }
};

ConditioningBundle bundle() {
  ConditioningBundle b;
  b.image_embedding.values = {0.5f, -1.0f, 2.0f};
  b.image_embedding.encoder_id = "enc";
  b.class_label = 1;
  b.class_text = "circle";
  b.method = "Embed-Mixup";
  b.source_ids = {"a", "b"};
  return b;
}

GenerationConfig cfg(int batch = 2) {
  GenerationConfig c;
  c.batch = batch;
  c.seed = 9;
  c.cfg_scale = 4.0;
  return c;
}

}  // namespace

TEST(External, RequestRecordCarriesBundleAndConfig) {
  auto t = std::make_shared<FakeTransport>();
  ExternalGenerator gen(t, "fake", 4, 4, 1);
  const auto out = gen.generate(bundle(), cfg());
  ASSERT_EQ(t->seen.size(), 1u);
  const auto req = json::parse(t->seen[0]);
  EXPECT_EQ(req["class_text"], "circle");
  EXPECT_EQ(req["image_embedding"].get<std::vector<float>>(), bundle().image_embedding.values);
  EXPECT_EQ(req["cfg"]["batch"], 2);
  EXPECT_EQ(req["cfg"]["cfg_scale"], 4.0);
  EXPECT_EQ(req["request_key"], request_key(bundle(), cfg(), gen.id()));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_FLOAT_EQ(out[1].pixels.at(0, 0, 0), std::nearbyint(0.35f * 255) / 255);  // quantized to 8 bits
  EXPECT_EQ(out[0].provenance.origin, Origin::synthetic);
  EXPECT_EQ(out[0].provenance.source_ids, bundle().source_ids);
  EXPECT_EQ(out[0].label, 1);
}

TEST(External, UnavailableIsRetriableAndNamesKey) {
  auto t = std::make_shared<FakeTransport>();
  t->handler = [](const std::string&) -> std::string { throw TransportUnavailable("down"); };
  ExternalGenerator gen(t, "fake", 4, 4, 1);
  try {
    gen.generate(bundle(), cfg());
    FAIL();
  } catch (const GenerationError& e) {
    EXPECT_TRUE(e.retriable());
    EXPECT_EQ(e.request_key(), request_key(bundle(), cfg(), gen.id()));
  }
}

TEST(External, MalformedResponsesAreFatal) {
  const std::vector<std::function<std::string(const std::string&)>> bad{
      [](const std::string& r) { return reply(r, 1); },      // one image too many
      [](const std::string& r) { return reply(r, -1); },     // one too few
      [](const std::string& r) { return reply(r, 0, 5); },   // wrong shape
      [](const std::string&) { return std::string("{not json"); },
      [](const std::string&) { return std::string(R"({"imgs":[]})"); },
      [](const std::string&) {
        return std::string(R"({"images":[{"height":4,"width":4,"channels":1,"pixels":[)") +
               "2.0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]}]}";
      },
  };
  for (std::size_t i = 0; i < bad.size(); ++i) {
    auto t = std::make_shared<FakeTransport>();
    t->handler = bad[i];
    ExternalGenerator gen(t, "fake", 4, 4, 1);
    try {
      gen.generate(bundle(), cfg(i == 5 ? 1 : 2));
      FAIL() << "case " << i;
    } catch (const GenerationError& e) {
      EXPECT_FALSE(e.retriable()) << "case " << i;
    }
  }
}

TEST(External, CachedKeyIssuesNoCall) {
  testkit::TempDir dir("external");
  auto t = std::make_shared<FakeTransport>();
  ExternalGenerator gen(t, "fake", 4, 4, 1);
  SyntheticCache cache(dir.path(), {"square", "circle"});
  const auto first = external_generate(gen, cache, bundle(), cfg());
  EXPECT_EQ(gen.calls(), 1u);
  const auto second = external_generate(gen, cache, bundle(), cfg());
  EXPECT_EQ(gen.calls(), 1u);
  EXPECT_EQ(t->seen.size(), 1u);
  EXPECT_TRUE(second[1].pixels == first[1].pixels);
}

TEST(External, HttpRoundTripAndStatusMapping) {
  httplib::Server server;
  int status = 200;
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    res.status = status;
    res.set_content(status == 200 ? reply(req.body) : std::string("busy"), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ExternalGenerator gen(std::make_shared<HttpTransport>("127.0.0.1", port, "/generate", 5.0), "local", 4, 4, 1);
  EXPECT_EQ(gen.generate(bundle(), cfg(3)).size(), 3u);
  status = 503;
  try {
    gen.generate(bundle(), cfg());
    FAIL();
  } catch (const GenerationError& e) {
    EXPECT_TRUE(e.retriable());
  }
  status = 400;
  try {
    gen.generate(bundle(), cfg());
    FAIL();
  } catch (const GenerationError& e) {
    EXPECT_FALSE(e.retriable());
  }
  server.stop();
  th.join();

  // Nothing listens on the port any more.
  try {
    gen.generate(bundle(), cfg());
    FAIL();
  } catch (const GenerationError& e) {
    EXPECT_TRUE(e.retriable());
    EXPECT_FALSE(e.request_key().empty());
  }
}

TEST(External, ConstructionErrors) {
  EXPECT_THROW(HttpTransport("h", 0), ConfigError);
  EXPECT_THROW(HttpTransport("h", 80, "/g", 0.0), ConfigError);
  EXPECT_THROW(ExternalGenerator(nullptr, "x", 4, 4, 1), ParameterError);
  EXPECT_THROW(ExternalGenerator(std::make_shared<FakeTransport>(), "x", 4, 4, 2), ParameterError);
}
