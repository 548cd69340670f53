#include <gtest/gtest.h>

#include <fstream>

#include <filesystem>
#include <thread>

#include <unistd.h>

#include "cordiet/http.hpp"
#include "cordiet/service.hpp"
#include "support.hpp"

using namespace cordiet;
namespace fs = std::filesystem;

namespace {

Profile profile(const std::string& phase, json params = json::object()) {
  return profile_from_json({{"phase", phase}, {"parameters", std::move(params)}});
}

Session police_session() {
  return create_session("t1", fixtures::text("police_reports.xml"), fixtures::text("police_ontology.xml"));
}

const json kPoliceAttrs = {"relationship", "violence", "threat", "night", "weekend"};

// All four phases with every artifact kind, plus a composite-object context.
void run_pipeline(Session& s) {
  run_phase(s, profile("start_investigation", {{"attributes", kPoliceAttrs}}));
  run_phase(s, profile("start_investigation",
                       {{"name", "byday"}, {"attributes", kPoliceAttrs}, {"objectCluster", "day"}}));
  run_phase(s, profile("compose_artifact", {{"kind", "fca"}}));
  run_phase(s, profile("compose_artifact", {{"kind", "fca"}, {"name", "daylattice"}, {"context", "byday"}}));
  run_phase(s, profile("compose_artifact", {{"kind", "tca"}, {"name", "tracks"}, {"entity", "suspect"}}));
  run_phase(s, profile("compose_artifact", {{"kind", "esom"}, {"rows", 6}, {"cols", 8}, {"epochs", 5}, {"seed", 3}}));
  run_phase(s, profile("compose_artifact", {{"kind", "hmm"},
                                            {"entity", "suspect"},
                                            {"attributes", {"threat", "violence", "relationship"}},
                                            {"unmapped", "skip"}}));
  run_phase(s, profile("compose_artifact", {{"kind", "hmm"},
                                            {"name", "hmm-bw"},
                                            {"mode", "baum_welch"},
                                            {"states", 2},
                                            {"entity", "suspect"},
                                            {"attributes", {"threat", "violence", "relationship"}},
                                            {"unmapped", "skip"}}));
  run_phase(s, profile("analyze_artifact"));
  run_phase(s, profile("deploy_knowledge",
                       {{"annotations", {{{"artifact", "fca"}, {"target", "0"}, {"note", "top concept"}}}}}));
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("cordiet-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Session, CreateBuildsDeterministicIndex) {
  auto a = police_session();
  auto b = police_session();
  EXPECT_EQ(a.index.serialize(), b.index.serialize());
  EXPECT_EQ(a.corpus.size(), 8u);
  EXPECT_EQ(a.ontology_version(), 0u);
}

TEST(Session, StoreLeavesNothingBehindOnBadUpload) {
  TempDir dir;
  SessionStore store(dir.path);
  EXPECT_THROW(store.create(fixtures::text("police_reports.xml"), "<ontology><attribute name=\"x\""), ParseError);
  EXPECT_THROW(store.create("<corpus>", fixtures::text("police_ontology.xml")), ParseError);
  EXPECT_TRUE(store.ids().empty());
  EXPECT_TRUE(fs::is_empty(dir.path));
  EXPECT_EQ(store.create(fixtures::text("police_reports.xml"), fixtures::text("police_ontology.xml")), "s0001");
}

TEST(Phases, SurveyContextAndLatticeMatchOracle) {
  auto s = create_session("t", fixtures::text("survey_corpus.xml"), fixtures::text("survey_ontology.xml"));
  run_phase(s, profile("start_investigation", {{"attributes", {"KDD", "FCA", "ontology", "IR"}}}));
  auto ctx = context_from_json(json::parse(get_artifact(s, "context", "json")));
  ASSERT_EQ(ctx.object_count(), 6u);
  ASSERT_EQ(ctx.attribute_count(), 4u);
  // closed object sets by brute force over the 2^6 subsets
  std::size_t closed = 0;
  for (unsigned mask = 0; mask < 64; ++mask) {
    Bitset A(6);
    for (std::size_t g = 0; g < 6; ++g)
      if (mask >> g & 1) A.set(g);
    closed += ctx.close_extent(A) == A;
  }
  run_phase(s, profile("compose_artifact", {{"kind", "fca"}}));
  auto lat = json::parse(get_artifact(s, "fca", "json"));
  EXPECT_EQ(lat["nodes"].size(), closed);
  EXPECT_EQ(s.artifact("fca").inputs, (std::vector<std::string>{"context"}));
}

TEST(Phases, OrderingIsEnforced) {
  auto s = police_session();
  EXPECT_THROW(run_phase(s, profile("compose_artifact", {{"kind", "fca"}})), OrderingError);
  EXPECT_THROW(run_phase(s, profile("analyze_artifact")), OrderingError);
  EXPECT_THROW(run_phase(s, profile("deploy_knowledge")), OrderingError);
  run_phase(s, profile("start_investigation", {{"attributes", kPoliceAttrs}}));
  EXPECT_THROW(run_phase(s, profile("compose_artifact", {{"kind", "fca"}, {"context", "nope"}})), OrderingError);
  EXPECT_THROW(run_phase(s, profile("analyze_artifact")), OrderingError);
  run_phase(s, profile("compose_artifact", {{"kind", "fca"}}));
  EXPECT_THROW(run_phase(s, profile("compose_artifact", {{"kind", "fca"}, {"context", "fca"}, {"name", "fca2"}})),
               OrderingError);
  EXPECT_THROW(run_phase(s, profile("deploy_knowledge")), OrderingError);
  run_phase(s, profile("analyze_artifact"));
  run_phase(s, profile("deploy_knowledge"));
  EXPECT_EQ(s.audit.size(), 4u);
}

TEST(Phases, ProfileValidation) {
  EXPECT_THROW(profile("start_investigation"), ConfigError);
  EXPECT_THROW(profile("start_investigation", {{"attributes", json::array()}}), ConfigError);
  EXPECT_THROW(profile("start_investigation", {{"attributes", {"a"}}, {"bogus", 1}}), ConfigError);
  EXPECT_THROW(profile("compose_artifact", {{"kind", "fca"}, {"limit", "ten"}}), ConfigError);
  EXPECT_THROW(profile("compose_artifact", {{"kind", "pca"}}), ConfigError);
  EXPECT_THROW(profile("compose_artifact", {{"kind", "tca"}}), ConfigError);
  EXPECT_THROW(profile("dance"), ConfigError);
  EXPECT_THROW(profile_from_json({{"phase", "analyze_artifact"}, {"extra", 1}}), ConfigError);
  auto a = profile("compose_artifact", {{"kind", "fca"}, {"limit", 10}});
  auto b = profile_from_json(json::parse(R"({"parameters": {"limit": 10, "kind": "fca"}, "phase": "compose_artifact"})"));
  EXPECT_EQ(profile_hash(a), profile_hash(b));
  EXPECT_NE(profile_hash(a), profile_hash(profile("compose_artifact", {{"kind", "fca"}})));

  auto s = police_session();
  run_phase(s, profile("start_investigation", {{"attributes", kPoliceAttrs}}));
  EXPECT_THROW(run_phase(s, profile("start_investigation", {{"attributes", kPoliceAttrs}})), ConfigError);
  EXPECT_THROW(run_phase(s, profile("start_investigation", {{"name", "x"}, {"attributes", {"nope"}}})), LookupError);
  EXPECT_THROW(run_phase(s, profile("compose_artifact", {{"kind", "fca"}, {"limit", 2}})), ResourceError);
  EXPECT_EQ(s.artifacts.size(), 1u);
}

TEST(Phases, SegmentationObjectsAndAttributeClustering) {
  auto s = police_session();
  run_phase(s, profile("start_investigation", {{"name", "y2010"},
                                               {"attributes", kPoliceAttrs},
                                               {"segmentation", {{"rule", "year"}, {"segment", "2010"}}}}));
  EXPECT_EQ(context_from_json(json::parse(get_artifact(s, "y2010", "json"))).object_count(), 7u);
  EXPECT_THROW(run_phase(s, profile("start_investigation", {{"name", "bad"},
                                                            {"attributes", kPoliceAttrs},
                                                            {"segmentation", {{"rule", "year"}, {"segment", "1999"}}}})),
               ConfigError);
  run_phase(s, profile("start_investigation",
                       {{"name", "two"}, {"attributes", kPoliceAttrs}, {"objects", {"R01", "R05"}}}));
  EXPECT_EQ(context_from_json(json::parse(get_artifact(s, "two", "json"))).object_count(), 2u);
  json groups = {{"text", {"relationship", "violence", "threat"}}, {"time", {"night", "weekend"}}};
  run_phase(s, profile("start_investigation", {{"name", "grouped"},
                                               {"attributes", kPoliceAttrs},
                                               {"attributeClustering", {{"mode", "any"}, {"groups", groups}}}}));
  auto g = context_from_json(json::parse(get_artifact(s, "grouped", "json")));
  EXPECT_EQ(g.attributes(), (std::vector<std::string>{"text", "time"}));
}

TEST(Artifacts, FormatsAndErrors) {
  auto s = police_session();
  run_pipeline(s);
  const auto& fca = s.artifact("fca");
  EXPECT_EQ(get_artifact(s, "fca", "json"), fca.json_payload);
  EXPECT_EQ(get_artifact(s, "fca", "dot"), *fca.dot_payload);
  EXPECT_EQ(open_envelope(get_artifact(s, "fca", "xml")), fca.json_payload);
  EXPECT_NE(get_artifact(s, "fca", "xml").find("kind=\"lattice\""), std::string::npos);
  EXPECT_NO_THROW(grid_from_checkpoint(json::parse(get_artifact(s, "esom", "checkpoint"))));
  EXPECT_NO_THROW(model_from_checkpoint(json::parse(get_artifact(s, "hmm-bw", "checkpoint"))));
  EXPECT_THROW(get_artifact(s, "context", "dot"), ConfigError);
  EXPECT_THROW(get_artifact(s, "fca", "png"), ConfigError);
  EXPECT_THROW(get_artifact(s, "nope", "json"), NotFoundError);
  EXPECT_EQ(get_artifact(s, "fca", "json"), get_artifact(s, "fca", "json"));

  auto tracks = json::parse(get_artifact(s, "tracks", "json"));
  EXPECT_EQ(tracks["trackList"].size(), 3u);
  auto report = json::parse(get_artifact(s, "report", "json"));
  EXPECT_EQ(report["termClusters"].size(), 3u);
  EXPECT_EQ(report["artifacts"].size(), 6u);
  auto bundle = json::parse(get_artifact(s, "bundle", "json"));
  EXPECT_EQ(bundle["annotations"][0]["note"], "top concept");
  EXPECT_EQ(bundle["artifacts"].size(), s.artifacts.size() - 1);

  // payloads with "]]>" survive the envelope
  std::string tricky = "a]]>b]]>";
  EXPECT_EQ(open_envelope(envelope("x", "y", "json", tricky)), tricky);
}

TEST(Documents, DocumentsAndComposites) {
  auto s = police_session();
  auto d = json::parse(get_document(s, "R03"));
  EXPECT_EQ(d["kind"], "document");
  EXPECT_EQ(d["url"], "https://reports.example.org/R03");
  EXPECT_EQ(d["fields"]["person"], "X");
  auto x = get_document(s, "R03", "xml");
  EXPECT_NE(open_envelope(x).find("R03"), std::string::npos);
  auto c = json::parse(get_document(s, "suspect/X"));
  EXPECT_EQ(c["kind"], "composite");
  EXPECT_EQ(c["url"], "cordiet://composite/suspect/X");
  ASSERT_EQ(c["members"].size(), 3u);
  EXPECT_EQ(c["members"][0]["link"], "/sessions/t1/documents/R01");
  EXPECT_THROW(get_document(s, "R99"), NotFoundError);
  EXPECT_THROW(get_document(s, "suspect/Q"), NotFoundError);
  EXPECT_THROW(get_document(s, "nope/X"), NotFoundError);
  EXPECT_THROW(get_document(s, "R01", "pdf"), ConfigError);
  EXPECT_EQ(resolve_url(s, "https://reports.example.org/R05"), "R05");
  EXPECT_EQ(resolve_url(s, "cordiet://composite/suspect/Y"), "suspect/Y");
  EXPECT_THROW(resolve_url(s, "https://elsewhere.example.org"), NotFoundError);
}

TEST(Reproducibility, ReplayIsByteIdentical) {
  auto s = police_session();
  run_pipeline(s);
  replace_ontology(s, fixtures::text("police_ontology.xml"));
  run_phase(s, profile("start_investigation", {{"name", "v1"}, {"attributes", {"threat"}}}));
  auto r = replay(s);
  ASSERT_EQ(r.artifact_order, s.artifact_order);
  for (const auto& name : s.artifact_order) {
    const auto& a = s.artifact(name);
    const auto& b = r.artifact(name);
    EXPECT_EQ(a.json_payload, b.json_payload) << name;
    EXPECT_EQ(a.dot_payload, b.dot_payload) << name;
    EXPECT_EQ(a.checkpoint, b.checkpoint) << name;
    EXPECT_EQ(a.profile_hash, b.profile_hash) << name;
    EXPECT_EQ(a.ontology_version, b.ontology_version) << name;
  }
  EXPECT_EQ(s.artifact("v1").ontology_version, 1u);
}

TEST(Reproducibility, EveryExportedUrlResolves) {
  auto s = police_session();
  run_pipeline(s);
  std::size_t checked = 0, failures = 0;
  for (const auto& name : s.artifact_order) {
    std::vector<std::string> urls;
    collect_urls(json::parse(s.artifact(name).json_payload), urls);
    for (const auto& u : urls) {
      ++checked;
      try {
        auto doc = json::parse(get_document(s, resolve_url(s, u)));
        if (doc["url"] != u) ++failures;
        for (const auto& m : doc.value("members", json::array())) get_document(s, m["id"].get<std::string>());
      } catch (const Error& e) {
        ++failures;
        ADD_FAILURE() << name << ": " << u << ": " << e.what();
      }
    }
  }
  EXPECT_GT(checked, 40u);
  EXPECT_EQ(failures, 0u);
}

TEST(Store, PersistsAndReloads) {
  TempDir dir;
  std::string id;
  std::string lattice;
  {
    SessionStore store(dir.path);
    id = store.create(fixtures::text("police_reports.xml"), fixtures::text("police_ontology.xml"));
    store.run_phase(id, profile("start_investigation", {{"attributes", kPoliceAttrs}}));
    store.write(id, [](Session& s) { s.profiles["lat"] = profile("compose_artifact", {{"kind", "fca"}}); });
    EXPECT_EQ(store.run_profile(id, "lat"), "fca");
    EXPECT_THROW(store.run_profile(id, "missing"), NotFoundError);
    EXPECT_THROW(store.run_phase(id, profile("compose_artifact", {{"kind", "fca"}})), ConfigError);
    lattice = store.read(id, [](const Session& s) { return get_artifact(s, "fca", "json"); });
    EXPECT_THROW(store.read("s9999", [](const Session&) { return 0; }), NotFoundError);
  }
  SessionStore again(dir.path);
  EXPECT_EQ(again.ids(), (std::vector<std::string>{id}));
  again.read(id, [&](const Session& s) {
    EXPECT_EQ(get_artifact(s, "fca", "json"), lattice);
    EXPECT_EQ(s.audit.size(), 2u);
    EXPECT_TRUE(s.profiles.count("lat"));
  });
  EXPECT_EQ(again.create(fixtures::text("police_reports.xml"), fixtures::text("police_ontology.xml")), "s0002");
}

TEST(Store, FailedWriteRollsBack) {
  TempDir dir;
  SessionStore store(dir.path);
  auto id = store.create(fixtures::text("police_reports.xml"), fixtures::text("police_ontology.xml"));
  EXPECT_THROW(store.write(id, [](Session& s) {
    s.profiles["x"] = Profile{};
    throw RuleError("boom");
  }), RuleError);
  EXPECT_TRUE(store.read(id, [](const Session& s) { return s.profiles.empty(); }));
  EXPECT_THROW(store.write(id, [](Session& s) { replace_ontology(s, "<ontology><bad"); }), ParseError);
  EXPECT_EQ(store.read(id, [](const Session& s) { return s.ontology_version(); }), 0u);
}

TEST(Store, IgnoresForeignFilesAndRejectsMislabelledSessions) {
  TempDir dir;
  std::string id;
  {
    SessionStore store(dir.path);
    id = store.create(fixtures::text("police_reports.xml"), fixtures::text("police_ontology.xml"));
  }
  std::ofstream(dir.path / "profile.json") << R"({"phase": "start_investigation"})";
  std::ofstream(dir.path / "notes.txt") << "x";
  EXPECT_EQ(SessionStore(dir.path).ids(), (std::vector<std::string>{id}));
  fs::copy_file(dir.path / (id + ".json"), dir.path / "s0042.json");
  EXPECT_THROW(SessionStore{dir.path}, ParseError);
}

TEST(Store, DataDirFromEnvironment) {
  ::setenv(kDataDirEnv, "/tmp/cordiet-env-dir", 1);
  EXPECT_EQ(SessionStore::data_dir(), fs::path("/tmp/cordiet-env-dir"));
  ::unsetenv(kDataDirEnv);
  EXPECT_EQ(SessionStore::data_dir("fallback"), fs::path("fallback"));
}

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    store_ = std::make_unique<SessionStore>(dir_.path);
    register_routes(server_, *store_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  TempDir dir_;
  std::unique_ptr<SessionStore> store_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(Http, FullWorkflow) {
  auto r = post("/sessions", {{"corpus", fixtures::text("police_reports.xml")},
                              {"ontology", fixtures::text("police_ontology.xml")}});
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 201);
  auto id = json::parse(r->body)["id"].get<std::string>();
  EXPECT_EQ(json::parse(client_->Get("/sessions")->body), json::array({id}));
  std::string base = "/sessions/" + id;

  r = post(base + "/phases", {{"phase", "compose_artifact"}, {"parameters", {{"kind", "fca"}}}});
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(json::parse(r->body)["error"], "ordering");

  r = post(base + "/phases", {{"phase", "start_investigation"}, {"parameters", {{"attributes", kPoliceAttrs}}}});
  ASSERT_EQ(r->status, 201);
  EXPECT_EQ(json::parse(r->body)["kind"], "context");
  r = post(base + "/phases", {{"phase", "compose_artifact"}, {"parameters", {{"kind", "fca"}}}});
  ASSERT_EQ(r->status, 201);

  auto lat = client_->Get(base + "/artifacts/fca");
  ASSERT_EQ(lat->status, 200);
  EXPECT_EQ(lat->body, store_->read(id, [](const Session& s) { return s.artifact("fca").json_payload; }));
  auto dot = client_->Get(base + "/artifacts/fca?format=dot");
  EXPECT_EQ(dot->get_header_value("Content-Type"), "text/vnd.graphviz");
  auto xml = client_->Get(base + "/artifacts/fca?format=xml");
  EXPECT_EQ(open_envelope(xml->body), lat->body);
  EXPECT_EQ(client_->Get(base + "/artifacts/nope")->status, 404);
  EXPECT_EQ(client_->Get(base + "/artifacts/fca?format=png")->status, 400);
  EXPECT_EQ(json::parse(client_->Get(base + "/artifacts")->body).size(), 2u);

  auto doc = client_->Get(base + "/documents/R01");
  ASSERT_EQ(doc->status, 200);
  EXPECT_EQ(json::parse(doc->body)["id"], "R01");
  auto comp = client_->Get(base + "/documents/suspect%2FX");
  ASSERT_EQ(comp->status, 200);
  EXPECT_EQ(json::parse(comp->body)["members"].size(), 3u);
  EXPECT_EQ(client_->Get(base + "/documents/suspect/X")->status, 200);
  EXPECT_EQ(client_->Get(base + "/documents/R99")->status, 404);
  auto resolved = client_->Get(base + "/resolve", httplib::Params{{"url", "https://reports.example.org/R02"}},
                               httplib::Headers{});
  ASSERT_EQ(resolved->status, 200);
  EXPECT_EQ(json::parse(resolved->body)["id"], "R02");

  auto put = client_->Put(base + "/profiles/tracks",
                          json{{"phase", "compose_artifact"},
                               {"parameters", {{"kind", "tca"}, {"entity", "suspect"}, {"name", "tracks"}}}}
                              .dump(),
                          "application/json");
  EXPECT_EQ(put->status, 200);
  EXPECT_EQ(json::parse(client_->Get(base + "/profiles")->body).size(), 1u);
  r = post(base + "/profiles/tracks/run", json::object());
  ASSERT_EQ(r->status, 201);
  EXPECT_EQ(json::parse(r->body)["artifact"], "tracks");
  EXPECT_EQ(client_->Delete(base + "/profiles/tracks")->status, 200);
  EXPECT_EQ(client_->Delete(base + "/profiles/tracks")->status, 404);

  auto onto = client_->Put(base + "/ontology", fixtures::text("police_ontology.xml"), "application/xml");
  ASSERT_EQ(onto->status, 200);
  EXPECT_EQ(json::parse(onto->body)["ontologyVersion"], 1);
  EXPECT_EQ(client_->Put(base + "/ontology", "<ontology>", "application/xml")->status, 400);

  auto summary = json::parse(client_->Get(base)->body);
  EXPECT_EQ(summary["audit"].size(), 3u);
  EXPECT_EQ(summary["ontologyVersion"], 1);
  EXPECT_EQ(client_->Get("/sessions/s0404")->status, 404);
}

TEST_F(Http, BadRequests) {
  EXPECT_EQ(client_->Post("/sessions", "{not json", "application/json")->status, 400);
  EXPECT_EQ(post("/sessions", {{"corpus", "<corpus>"}, {"ontology", "<ontology/>"}})->status, 400);
  EXPECT_EQ(post("/sessions", {{"corpus", fixtures::text("police_reports.xml")}})->status, 400);
  auto r = post("/sessions", {{"corpus", fixtures::text("police_reports.xml")},
                              {"ontology", fixtures::text("police_ontology.xml")}});
  auto id = json::parse(r->body)["id"].get<std::string>();
  r = post("/sessions/" + id + "/phases", {{"phase", "start_investigation"}, {"parameters", {{"attributes", "x"}}}});
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body)["error"], "config");
  r = post("/sessions/" + id + "/phases",
           {{"phase", "start_investigation"}, {"parameters", {{"attributes", {"x"}}}}});
  EXPECT_EQ(json::parse(r->body)["error"], "lookup");
  EXPECT_EQ(client_->Get("/sessions/" + id + "/resolve")->status, 400);
}

TEST(HttpStatus, MapsErrorKinds) {
  EXPECT_EQ(http_status(NotFoundError("x")), 404);
  EXPECT_EQ(http_status(OrderingError("x")), 409);
  EXPECT_EQ(http_status(ResourceError("x")), 413);
  EXPECT_EQ(http_status(InternalError("x")), 500);
  EXPECT_EQ(http_status(ConfigError("x")), 400);
  EXPECT_EQ(http_status(ParseError("x")), 400);
  EXPECT_EQ(kEndpoints.size(), 13u);
}
