#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "daf/adapters.hpp"
#include "support/fixtures.hpp"

using namespace daf;

namespace {

// In-process HTTP server backed by simple JSON handlers.
class LocalServer {
 public:
  LocalServer() {
    server_.Post("/score", [](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const auto option = body.at("option").get<std::string>();
      nlohmann::json out;
      out["logit"] = option == "beta" ? 2.5 : -0.5;
      res.set_content(out.dump(), "application/json");
    });
    server_.Post("/equiv", [](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json out;
      out["equivalence"] =
          body.at("candidate").get<std::string>() == body.at("reference").get<std::string>() ? 1.0
                                                                                             : 0.25;
      res.set_content(out.dump(), "application/json");
    });
    server_.Post("/complete", [](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json out;
      out["text"] = req.get_header_value("Authorization") == "Bearer sekrit"
                        ? "1. one\n2. two\n3. three"
                        : "unauthorized";
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ > 0) {
      thread_ = std::thread([this] { server_.listen_after_bind(); });
      server_.wait_until_ready();
    }
  }
  ~LocalServer() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }
  bool ok() const { return port_ > 0; }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

 private:
  httplib::Server server_;
  int port_ = -1;
  std::thread thread_;
};

}  // namespace

TEST_CASE("http adapters round-trip against a local server") {
  LocalServer server;
  if (!server.ok()) SKIP("cannot bind a loopback port in this environment");
  server.wait_ready();

  SECTION("scorer backend posts the query and reads the logit") {
    HttpScorerBackend backend(server.url("/score"));
    const auto q = fixtures::make_question("h1");
    CHECK(backend.score_option(make_query(q, 1)) == 2.5);   // "beta"
    CHECK(backend.score_option(make_query(q, 0)) == -0.5);  // "alpha"
    CHECK_FALSE(backend.concurrent_calls_allowed());
  }
  SECTION("equivalence scorer") {
    HttpEquivalenceScorer eq(server.url("/equiv"));
    CHECK(eq.equivalence("x", "x", "q") == 1.0);
    CHECK(eq.equivalence("x", "y", "q") == 0.25);
  }
  SECTION("llm client reads endpoint and credential from the environment") {
    setenv("DAF_LLM_ENDPOINT", server.url("/complete").c_str(), 1);
    setenv("DAF_LLM_API_KEY", "sekrit", 1);
    HttpLlmClient client;
    CHECK(client.complete("anything") == "1. one\n2. two\n3. three");
    unsetenv("DAF_LLM_ENDPOINT");
    unsetenv("DAF_LLM_API_KEY");
  }
  SECTION("http backend spec resolves through the registry") {
    auto backends = BackendRegistry::with_builtins();
    auto equivalences = EquivalenceRegistry::with_builtins();
    register_http_adapters(backends, equivalences);
    const auto b = backends.make(server.url("/score"));
    const auto q = fixtures::make_question("h2");
    CHECK(b->score_option(make_query(q, 1)) == 2.5);
  }
}

TEST_CASE("llm client requires the endpoint variable") {
  unsetenv("DAF_LLM_ENDPOINT");
  CHECK_THROWS_WITH(HttpLlmClient(), Catch::Matchers::ContainsSubstring("DAF_LLM_ENDPOINT"));
}

TEST_CASE("registry rejects unknown schemes") {
  const auto backends = BackendRegistry::with_builtins();
  CHECK_THROWS_WITH(backends.make("warp:x"), Catch::Matchers::ContainsSubstring("unknown backend"));
  const auto equivalences = EquivalenceRegistry::with_builtins();
  CHECK_THROWS_WITH(equivalences.make("warp"),
                    Catch::Matchers::ContainsSubstring("unknown equivalence scorer"));
}

TEST_CASE("registry builds builtin backends from specs") {
  fixtures::TempDir tmp;
  const auto stub_path =
      tmp.write("s.json", R"({"default_logit": 0.5, "scores": {"q": [1.0, 2.0]}})");
  const auto backends = BackendRegistry::with_builtins();
  const auto q = fixtures::make_question("q", 0, {"a", "b"});
  CHECK(backends.make("stub:" + stub_path.string())->score_option(make_query(q, 1)) == 2.0);
  CHECK(backends.make("constant:1.25")->score_option(make_query(q, 0)) == 1.25);
  CHECK(backends.make("constant")->score_option(make_query(q, 0)) == 0.0);

  const auto list = backends.make_all({"constant:1", "constant:2"});
  CHECK(list.size() == 2);
}
