#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "cordiet/ontology.hpp"
#include "support.hpp"

using namespace cordiet;

namespace {

std::string wrap(const std::string& body) { return "<ontology>" + body + "</ontology>"; }

const char* kBase = R"(<cluster name="c"><term>data mining</term></cluster>
<attribute name="A" kind="textmining"><clusterRef name="c"/></attribute>)";

struct Police {
  Corpus corpus = fixtures::corpus("police_reports.xml");
  Ontology onto = fixtures::ontology("police_ontology.xml");
  InvertedIndex index = build_index(corpus, all_sections());
  Evaluator eval{onto, index};

  std::set<std::string> where(const std::string& attr) const {
    std::set<std::string> out;
    for (const auto& d : corpus.documents())
      if (d.timestamp || !std::holds_alternative<TemporalAttribute>(onto.attribute(attr).definition))
        if (eval(attr, d)) out.insert(d.id);
    return out;
  }
};

}  // namespace

TEST(ParseOntology, FixturesParseAndRoundTrip) {
  for (const char* f : {"survey_ontology.xml", "police_ontology.xml", "clinical_ontology.xml"}) {
    auto o = fixtures::ontology(f);
    auto text = serialize_ontology(o);
    EXPECT_EQ(serialize_ontology(parse_ontology(text)), text) << f;
  }
  auto o = fixtures::ontology("police_ontology.xml");
  EXPECT_EQ(o.clusters().size(), 3u);
  EXPECT_EQ(o.attributes().size(), 7u);
  EXPECT_EQ(o.object_cluster_rules().size(), 3u);
  EXPECT_EQ(o.segmentation_rules().size(), 2u);
}

TEST(ParseOntology, DanglingReferenceIsNamed) {
  try {
    parse_ontology(wrap(std::string(kBase) + R"(<attribute name="B" kind="compound"><and><ref name="A"/><ref name="ghost"/></and></attribute>)"));
    FAIL();
  } catch (const OntologyError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
  EXPECT_THROW(parse_ontology(wrap(R"(<attribute name="A" kind="textmining"><clusterRef name="nope"/></attribute>)")),
               OntologyError);
}

TEST(ParseOntology, CycleListsPath) {
  try {
    parse_ontology(wrap(std::string(kBase) +
                        R"(<attribute name="X" kind="compound"><or><ref name="A"/><ref name="Y"/></or></attribute>
                           <attribute name="Y" kind="compound"><not><ref name="X"/></not></attribute>)"));
    FAIL();
  } catch (const OntologyError& e) {
    EXPECT_STREQ(e.what(), "cycle in compound attributes: X -> Y -> X");
  }
  try {
    parse_ontology(wrap(R"(<attribute name="S" kind="compound"><ref name="S"/></attribute>)"));
    FAIL();
  } catch (const OntologyError& e) {
    EXPECT_STREQ(e.what(), "cycle in compound attributes: S -> S");
  }
}

TEST(ParseOntology, DuplicateNamesRejected) {
  EXPECT_THROW(parse_ontology(wrap(std::string(kBase) + R"(<cluster name="c"><term>x</term></cluster>)")), OntologyError);
  EXPECT_THROW(parse_ontology(wrap(std::string(kBase) + R"(<attribute name="A" kind="temporal"><periodic hours="1-2"/></attribute>)")),
               OntologyError);
}

TEST(ParseOntology, MalformedInputs) {
  EXPECT_THROW(parse_ontology("<ontology><cluster name=\"c\">"), ParseError);
  EXPECT_THROW(parse_ontology(wrap(R"(<cluster name="c"></cluster>)")), OntologyError);
  EXPECT_THROW(parse_ontology(wrap(R"(<attribute name="T" kind="temporal"><periodic hours="25-3"/></attribute>)")), ParseError);
  EXPECT_THROW(parse_ontology(wrap(R"(<attribute name="T" kind="temporal"><periodic weekdays="funday"/></attribute>)")), ParseError);
  EXPECT_THROW(parse_ontology(wrap(R"(<attribute name="T" kind="temporal"><window from="2010-01-02" to="2010-01-01"/></attribute>)")), ParseError);
  EXPECT_THROW(parse_ontology(wrap(R"(<attribute name="T" kind="magic"/>)")), ParseError);
  EXPECT_THROW(parse_ontology(wrap(R"(<objectCluster name="o" key="color"/>)")), ParseError);
  EXPECT_THROW(parse_ontology(wrap(std::string(kBase) + R"(<attribute name="B" kind="compound"><xor><ref name="A"/></xor></attribute>)")), ParseError);
}

TEST(ParseOntology, NestingDepthIsBounded) {
  auto nested = [](int depth) {
    std::string open, close;
    for (int i = 0; i < depth - 1; ++i) {
      open += "<not>";
      close = "</not>" + close;
    }
    return wrap(std::string(kBase) + "<attribute name=\"B\" kind=\"compound\">" + open + "<ref name=\"A\"/>" + close +
                "</attribute>");
  };
  EXPECT_NO_THROW(parse_ontology(nested(kMaxExpressionDepth)));
  EXPECT_THROW(parse_ontology(nested(kMaxExpressionDepth + 1)), ParseError);
}

TEST(ParseOntology, TermsMustSurviveAnalysis) {
  auto o = parse_ontology(wrap(R"(<cluster name="c"><term>the and</term></cluster>)"));
  EXPECT_THROW(o.validate_terms(Language::english), OntologyError);
}

TEST(EvaluateAttribute, TermClusterSpecificity) {
  auto c = fixtures::corpus("survey_corpus.xml");
  auto onto = parse_ontology(wrap(R"(<cluster name="data mining"><term>data mining</term><term>KDD</term><term>data exploration</term></cluster>
      <attribute name="KDD" kind="textmining"><clusterRef name="data mining"/></attribute>)"));
  auto idx = build_index(c, all_sections());
  EXPECT_TRUE(evaluate_attribute(onto, onto.attribute("KDD"), c.at("P1"), idx));
  // P2 mentions data mining only in its body; restricted to the abstract it
  // only speaks of attribute exploration
  auto restricted = parse_ontology(wrap(R"(<cluster name="data mining"><term>data mining</term><term>KDD</term><term>data exploration</term></cluster>
      <attribute name="KDD" kind="textmining"><clusterRef name="data mining"/><sections>abstract</sections></attribute>)"));
  EXPECT_FALSE(evaluate_attribute(restricted, restricted.attribute("KDD"), c.at("P2"), idx));
  EXPECT_TRUE(evaluate_attribute(restricted, restricted.attribute("KDD"), c.at("P4"), idx));
}

TEST(EvaluateAttribute, PoliceFixture) {
  Police p;
  EXPECT_EQ(p.where("relationship"), (std::set<std::string>{"R01", "R03", "R06", "R07"}));
  EXPECT_EQ(p.where("violence"), (std::set<std::string>{"R03", "R05", "R06"}));
  EXPECT_EQ(p.where("threat"), (std::set<std::string>{"R01", "R06"}));
  EXPECT_EQ(p.where("domestic violence"), (std::set<std::string>{"R01", "R03", "R06"}));
  EXPECT_EQ(p.where("other violence"), (std::set<std::string>{"R05"}));
  EXPECT_EQ(p.where("night"), (std::set<std::string>{"R01", "R03", "R05", "R08"}));
  EXPECT_EQ(p.where("weekend"), (std::set<std::string>{"R05"}));
}

TEST(EvaluateAttribute, TemporalWindowIsHalfOpen) {
  auto onto = parse_ontology(wrap(R"(<attribute name="W" kind="temporal"><window from="2010-01-01" to="2010-02-01"/></attribute>)"));
  auto c = load_documents(R"(<corpus language="en">
    <document id="a" timestamp="2010-01-01T00:00:00Z" url="a"/>
    <document id="b" timestamp="2010-01-31T23:59:59Z" url="b"/>
    <document id="c" timestamp="2010-02-01T00:00:00Z" url="c"/>
    <document id="d" url="d"/></corpus>)");
  auto idx = build_index(c, all_sections());
  const auto& w = onto.attribute("W");
  EXPECT_TRUE(evaluate_attribute(onto, w, c.at("a"), idx));
  EXPECT_TRUE(evaluate_attribute(onto, w, c.at("b"), idx));
  EXPECT_FALSE(evaluate_attribute(onto, w, c.at("c"), idx));
  EXPECT_THROW(evaluate_attribute(onto, w, c.at("d"), idx), EvaluationError);
}

// Compound attributes evaluate like the boolean formula over their leaves,
// checked on random expression trees.
TEST(EvaluateAttribute, RandomCompoundExpressionsMatchTruthTable) {
  Police p;
  std::vector<std::string> leaves = {"relationship", "violence", "threat", "night", "weekend"};
  std::map<std::string, std::map<std::string, bool>> truth;
  for (const auto& d : p.corpus.documents())
    for (const auto& l : leaves) truth[d.id][l] = p.eval(l, d);
  std::mt19937_64 rng(3);
  std::function<Expr(int)> gen = [&](int depth) -> Expr {
    int pick = depth >= 4 ? 0 : static_cast<int>(rng() % 4);
    if (pick == 0) return Expr::ref(leaves[rng() % leaves.size()]);
    if (pick == 3) return Expr::negate(gen(depth + 1));
    std::vector<Expr> ops;
    for (std::size_t i = 0, n = 1 + rng() % 3; i < n; ++i) ops.push_back(gen(depth + 1));
    return pick == 1 ? Expr::all_of(std::move(ops)) : Expr::any_of(std::move(ops));
  };
  std::function<bool(const Expr&, const std::string&)> oracle = [&](const Expr& e, const std::string& id) -> bool {
    switch (e.op) {
      case Expr::Op::ref: return truth[id][e.name];
      case Expr::Op::negate: return !oracle(e.operands[0], id);
      case Expr::Op::all_of:
        return std::all_of(e.operands.begin(), e.operands.end(), [&](const Expr& o) { return oracle(o, id); });
      case Expr::Op::any_of:
        return std::any_of(e.operands.begin(), e.operands.end(), [&](const Expr& o) { return oracle(o, id); });
    }
    return false;
  };
  for (int i = 0; i < 500; ++i) {
    auto e = gen(0);
    for (const auto& d : p.corpus.documents()) ASSERT_EQ(p.eval(e, d), oracle(e, d.id));
  }
}

TEST(Segmentation, IntervalsAndOutside) {
  Police p;
  auto segs = apply_segmentation(p.corpus, p.onto.segmentation_rule("year"), p.onto, p.index);
  ASSERT_EQ(segs.size(), 3u);
  EXPECT_EQ(segs[0].label, "2010");
  EXPECT_EQ(segs[0].documents.size(), 7u);
  EXPECT_EQ(segs[1].label, "2011");
  EXPECT_EQ(segs[1].documents.documents().at(0).id, "R08");
  EXPECT_EQ(segs[2].label, "outside");
  EXPECT_TRUE(segs[2].documents.empty());
}

TEST(Segmentation, PredicateSplitsMatchAndRest) {
  Police p;
  auto segs = apply_segmentation(p.corpus, p.onto.segmentation_rule("domestic"), p.onto, p.index);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].documents.size(), 3u);
  EXPECT_EQ(segs[1].documents.size(), 5u);
}

TEST(Segmentation, OverlappingIntervalsFail) {
  auto onto = parse_ontology(wrap(R"(<segmentation name="s">
      <interval from="2010-01-01" to="2010-06-01" label="a"/>
      <interval from="2010-05-01" to="2011-01-01" label="b"/></segmentation>)"));
  Police p;
  EXPECT_THROW(apply_segmentation(p.corpus, onto.segmentation_rule("s"), onto, p.index), RuleError);
}

TEST(ObjectCluster, GroupsBySuspect) {
  Police p;
  auto r = apply_object_cluster(p.corpus, p.onto.object_cluster_rule("suspect"));
  ASSERT_EQ(r.composites.size(), 3u);
  EXPECT_EQ(r.composites[0].key, "X");
  EXPECT_EQ(r.composites[0].members, (std::vector<std::string>{"R01", "R02", "R03"}));
  EXPECT_EQ(r.composites[1].members, (std::vector<std::string>{"R04", "R05"}));
  EXPECT_EQ(r.composites[2].members, (std::vector<std::string>{"R06", "R07"}));
  EXPECT_EQ(r.skipped, std::vector<std::string>{"R08"});
  EXPECT_EQ(r.composites[0].member_urls[0], "https://reports.example.org/R01");
}

TEST(ObjectCluster, MissingKeyPolicies) {
  Police p;
  try {
    apply_object_cluster(p.corpus, p.onto.object_cluster_rule("suspect-strict"));
    FAIL();
  } catch (const RuleError& e) {
    EXPECT_NE(std::string(e.what()).find("R08"), std::string::npos);
  }
  auto onto = parse_ontology(wrap(R"(<objectCluster name="own" key="field:person" missing="own-group"/>)"));
  auto r = apply_object_cluster(p.corpus, onto.object_cluster_rule("own"));
  ASSERT_EQ(r.composites.size(), 4u);
  EXPECT_EQ(r.composites[3].key, "R08");
}

TEST(ObjectCluster, TimestampKeyAndCompositeCorpus) {
  Police p;
  auto r = apply_object_cluster(p.corpus, p.onto.object_cluster_rule("day"));
  std::size_t members = 0;
  for (const auto& c : r.composites) members += c.members.size();
  EXPECT_EQ(members, p.corpus.size());
  EXPECT_EQ(r.composites.size(), 6u);  // R01/R02 and R06/R07 share a day
  auto cc = composite_corpus(p.corpus, r.composites);
  EXPECT_EQ(cc.size(), 6u);
  for (const auto& d : cc.documents()) EXPECT_EQ(d.url, composite_url(d.id));
}
