#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int status;
  std::string out;
};

fs::path data_dir() {
  static fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("cordiet-cli-" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run cli(const std::string& args) {
  std::string cmd = "CORDIET_DATA_DIR='" + data_dir().string() + "' '" CORDIET_CLI "' " + args + " 2>/dev/null";
  FILE* p = ::popen(cmd.c_str(), "r");
  Run r{-1, {}};
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string fx(const std::string& name) { return "'" + fixtures::path(name) + "'"; }

std::string police() { return "--corpus " + fx("police_reports.xml") + " --ontology " + fx("police_ontology.xml"); }

std::string write_temp(const std::string& name, const std::string& text) {
  auto p = data_dir() / name;
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST(Cli, Ingest) {
  auto r = cli("ingest " + fx("survey_corpus.xml"));
  ASSERT_EQ(r.status, 0);
  auto j = json::parse(r.out);
  EXPECT_EQ(j["documents"], 6);
  EXPECT_EQ(j["language"], "en");
  EXPECT_EQ(cli("ingest " + fx("survey_corpus.xml") + " --language nl").status, 1);
  EXPECT_EQ(cli("ingest /nonexistent.xml").status, 105);  // CLI11 validation failure
}

TEST(Cli, OntologyCheck) {
  auto r = cli("ontology check " + fx("police_ontology.xml"));
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(json::parse(r.out)["objectClusterRules"], 3);
  auto bad = write_temp("bad_ontology.xml", "<ontology><attribute name=\"a\" kind=\"compound\"><ref name=\"a\"/></attribute></ontology>");
  EXPECT_EQ(cli("ontology check '" + bad + "'").status, 1);
}

TEST(Cli, ContextFcaEsom) {
  auto r = cli("context build " + police() + " --attributes relationship,violence,threat --format cxt");
  ASSERT_EQ(r.status, 0);
  auto cxt = write_temp("police.cxt", r.out);
  auto lat = cli("fca '" + cxt + "'");
  ASSERT_EQ(lat.status, 0);
  EXPECT_EQ(json::parse(lat.out)["format"], "cordiet-lattice");
  auto b3 = cli("fca " + fx("b3.cxt"));
  EXPECT_EQ(json::parse(b3.out)["nodes"].size(), 8u);
  EXPECT_EQ(cli("fca " + fx("b3.cxt") + " --limit 3").status, 1);
  EXPECT_NE(cli("fca " + fx("b3.cxt") + " --format dot").out.find("digraph"), std::string::npos);
  auto ckpt = (data_dir() / "grid.json").string();
  auto esom = cli("esom " + fx("b3.cxt") + " --rows 4 --cols 5 --epochs 3 --checkpoint '" + ckpt + "'");
  ASSERT_EQ(esom.status, 0);
  EXPECT_EQ(json::parse(esom.out)["umatrix"].size(), 20u);
  EXPECT_TRUE(fs::exists(ckpt));
  EXPECT_EQ(cli("esom " + fx("b3.cxt") + " --resume '" + ckpt + "' --epochs 1").status, 0);
}

TEST(Cli, TcaAndHmm) {
  auto t = cli("tca " + police() + " --attributes relationship,violence,threat --entity suspect");
  ASSERT_EQ(t.status, 0);
  EXPECT_EQ(json::parse(t.out)["trackList"].size(), 3u);
  auto h = cli("hmm --corpus " + fx("clinical_events.xml") + " --ontology " + fx("clinical_ontology.xml") +
               " --entity patient --field activity");
  ASSERT_EQ(h.status, 0);
  EXPECT_EQ(json::parse(h.out)["edges"].size(), 2u);
  auto seqs = write_temp("seqs.json", "[[0,1,2],[0,1,2]]");
  auto p = cli("hmm --sequences '" + seqs + "' --format checkpoint");
  ASSERT_EQ(p.status, 0);
  EXPECT_EQ(json::parse(p.out)["T"], json::array({1.0, 0.0, 0.0}));
  EXPECT_EQ(cli("hmm --sequences '" + seqs + "' --mode baum_welch --states 2").status, 0);
  EXPECT_EQ(cli("hmm --sequences '" + seqs + "' --threshold 2").status, 1);
}

TEST(Cli, SessionsExportAndReplay) {
  auto c = cli("session create " + police());
  ASSERT_EQ(c.status, 0);
  std::string id = c.out.substr(0, c.out.find('\n'));
  auto p1 = write_temp("p1.json", R"({"phase": "start_investigation", "parameters": {"attributes": ["threat", "violence"]}})");
  auto p2 = write_temp("p2.json", R"({"phase": "compose_artifact", "parameters": {"kind": "fca"}})");
  EXPECT_EQ(cli("session run " + id + " --profile '" + p2 + "'").status, 1);  // ordering
  EXPECT_EQ(cli("session run " + id + " --profile '" + p1 + "'").out, "context\n");
  EXPECT_EQ(cli("session run " + id + " --profile '" + p2 + "' --save-as lat").out, "fca\n");
  auto xml = cli("export --session " + id + " --artifact fca --format xml");
  ASSERT_EQ(xml.status, 0);
  EXPECT_NE(xml.out.find("<cordiet version=\"1\">"), std::string::npos);
  auto doc = cli("export --session " + id + " --document suspect/X");
  EXPECT_EQ(json::parse(doc.out)["kind"], "composite");
  EXPECT_EQ(cli("export --session " + id + " --artifact nope").status, 1);
  auto rep = cli("session replay " + id);
  EXPECT_EQ(rep.status, 0);
  EXPECT_EQ(rep.out, "identical\n");
  auto show = json::parse(cli("session show " + id).out);
  EXPECT_EQ(show["audit"].size(), 2u);
  EXPECT_TRUE(show["profiles"].contains("lat"));
  EXPECT_NE(cli("session list").out.find(id), std::string::npos);
}
