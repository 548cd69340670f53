// Command-line front end. The analysis subcommands run the same phase code
// as the service on a throwaway in-memory session; `session`, `export` and
// `serve` work on the persistent store in the data directory.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cordiet/http.hpp"
#include "cordiet/service.hpp"

using namespace cordiet;

namespace {

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ','))
      if (!part.empty()) out.push_back(part);
  }
  return out;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  f << text;
  if (!f) throw ResourceError("cannot write " + out_path);
}

std::optional<Language> language_opt(const std::string& code) {
  if (code.empty()) return std::nullopt;
  return parse_language(code);
}

json read_json_file(const std::string& path) {
  auto text = path == "-" ? std::string(std::istreambuf_iterator<char>(std::cin), {}) : read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// Inputs shared by the subcommands that start from corpus + ontology.
struct Inputs {
  std::string corpus, ontology, language;
  std::vector<std::string> attributes;
  std::string object_cluster, segmentation;

  void add(CLI::App* cmd, bool with_attributes = true) {
    cmd->add_option("--corpus", corpus, "corpus XML file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--ontology", ontology, "ontology XML file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--language", language, "en, nl or ru; defaults to the corpus attribute");
    if (with_attributes) {
      cmd->add_option("--attributes", attributes, "ontology attributes (comma separated or repeated)")->required();
      cmd->add_option("--object-cluster", object_cluster, "object-cluster rule grouping documents");
      cmd->add_option("--segmentation", segmentation, "rule:segment restricting the objects");
    }
  }

  Session session() const {
    return create_session("cli", read_file(corpus), read_file(ontology), language_opt(language));
  }

  json context_profile() const {
    json q{{"attributes", split_list(attributes)}};
    if (!object_cluster.empty()) q["objectCluster"] = object_cluster;
    if (!segmentation.empty()) {
      auto colon = segmentation.find(':');
      if (colon == std::string::npos) throw ConfigError("--segmentation expects rule:segment");
      q["segmentation"] = {{"rule", segmentation.substr(0, colon)}, {"segment", segmentation.substr(colon + 1)}};
    }
    return q;
  }
};

Profile make_profile(Phase phase, json params) {
  return profile_from_json({{"phase", to_string(phase)}, {"parameters", std::move(params)}});
}

std::string compose(const Inputs& in, json params, const std::string& format) {
  auto s = in.session();
  run_phase(s, make_profile(Phase::start_investigation, in.context_profile()));
  auto name = run_phase(s, make_profile(Phase::compose_artifact, std::move(params))).name;
  return get_artifact(s, name, format);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cordiet: concept discovery over timestamped text documents"};
  app.require_subcommand(1);
  std::string data_dir = SessionStore::data_dir().string();
  app.add_option("--data-dir", data_dir, "session store directory (env CORDIET_DATA_DIR)");
  std::string out;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load a corpus and build its inverted index");
  std::string ingest_corpus, ingest_lang, ingest_sections, ingest_index;
  ingest->add_option("corpus", ingest_corpus, "corpus XML file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--language", ingest_lang, "en, nl or ru");
  ingest->add_option("--sections", ingest_sections, "comma separated sections to index (default all)");
  ingest->add_option("--index", ingest_index, "write the index JSON here");
  ingest->callback([&] {
    auto corpus = load_documents_file(ingest_corpus, language_opt(ingest_lang));
    auto sections = ingest_sections.empty() ? all_sections() : parse_section_list(ingest_sections);
    auto index = build_index(corpus, sections);
    if (!ingest_index.empty()) emit(index.serialize(), ingest_index);
    std::size_t timestamped = 0;
    for (const auto& d : corpus.documents()) timestamped += d.timestamp.has_value();
    emit(json{{"documents", corpus.size()},
              {"timestamped", timestamped},
              {"language", language_code(corpus.language())},
              {"analyzer", analyzer_id(corpus.language())},
              {"sections", sections},
              {"terms", index.postings().size()}}
             .dump(2),
         "-");
  });

  // ontology check
  auto* ontology = app.add_subcommand("ontology", "ontology tools");
  ontology->require_subcommand(1);
  auto* check = ontology->add_subcommand("check", "parse and validate an ontology");
  std::string check_file, check_lang = "en";
  check->add_option("ontology", check_file, "ontology XML file")->required()->check(CLI::ExistingFile);
  check->add_option("--language", check_lang, "language the terms are validated for");
  check->callback([&] {
    auto onto = parse_ontology(read_file(check_file));
    onto.validate_terms(parse_language(check_lang));
    emit(json{{"valid", true},
              {"clusters", onto.clusters().size()},
              {"attributes", onto.attributes().size()},
              {"objectClusterRules", onto.object_cluster_rules().size()},
              {"segmentationRules", onto.segmentation_rules().size()}}
             .dump(2),
         "-");
  });

  // context build
  auto* context = app.add_subcommand("context", "formal context tools");
  context->require_subcommand(1);
  auto* build = context->add_subcommand("build", "evaluate attributes over documents");
  Inputs ctx_in;
  std::string ctx_format = "json";
  std::vector<std::string> ctx_objects;
  ctx_in.add(build);
  build->add_option("--objects", ctx_objects, "restrict to these document ids");
  build->add_option("--format", ctx_format, "json or cxt")->check(CLI::IsMember({"json", "cxt"}));
  build->add_option("-o,--output", out, "output file (default stdout)");
  build->callback([&] {
    auto s = ctx_in.session();
    auto q = ctx_in.context_profile();
    if (!ctx_objects.empty()) q["objects"] = split_list(ctx_objects);
    run_phase(s, make_profile(Phase::start_investigation, q));
    auto text = get_artifact(s, "context", "json");
    if (ctx_format == "cxt") text = to_burmeister(context_from_json(json::parse(text)));
    emit(text, out);
  });

  // fca
  auto* fca = app.add_subcommand("fca", "concept lattice of a context file (.cxt or JSON)");
  std::string fca_file, fca_format = "json";
  std::size_t fca_limit = kDefaultConceptLimit;
  fca->add_option("context", fca_file, "context file")->required()->check(CLI::ExistingFile);
  fca->add_option("--format", fca_format, "json or dot")->check(CLI::IsMember({"json", "dot"}));
  fca->add_option("--limit", fca_limit, "maximum number of concepts");
  fca->add_option("-o,--output", out, "output file (default stdout)");
  fca->callback([&] {
    auto ctx = parse_context(read_file(fca_file));
    emit(export_lattice(build_lattice(ctx, compute_concepts(ctx, fca_limit)), fca_format), out);
  });

  // tca
  auto* tca = app.add_subcommand("tca", "life tracks of entities over the concept lattice");
  Inputs tca_in;
  std::string tca_entity, tca_gran = "day", tca_format = "json";
  tca_in.add(tca);
  tca->add_option("--entity", tca_entity, "object-cluster rule identifying tracked entities")->required();
  tca->add_option("--granularity", tca_gran, "hour, day, week, month or year");
  tca->add_option("--format", tca_format, "json or dot")->check(CLI::IsMember({"json", "dot"}));
  tca->add_option("-o,--output", out, "output file (default stdout)");
  tca->callback([&] {
    emit(compose(tca_in, {{"kind", "tca"}, {"entity", tca_entity}, {"granularity", tca_gran}}, tca_format), out);
  });

  // esom
  auto* esom = app.add_subcommand("esom", "train an emergent self-organizing map on a context file");
  std::string esom_file, esom_topology = "toroid", esom_checkpoint, esom_resume;
  std::size_t esom_rows = 20, esom_cols = 30;
  std::uint64_t esom_seed = 1;
  TrainingSchedule esom_sched;
  esom->add_option("context", esom_file, "context file (.cxt or JSON)")->required()->check(CLI::ExistingFile);
  esom->add_option("--rows", esom_rows);
  esom->add_option("--cols", esom_cols);
  esom->add_option("--topology", esom_topology, "toroid or planar");
  esom->add_option("--seed", esom_seed);
  esom->add_option("--epochs", esom_sched.epochs);
  esom->add_option("--rate-start", esom_sched.rate_start);
  esom->add_option("--rate-end", esom_sched.rate_end);
  esom->add_option("--radius-start", esom_sched.radius_start);
  esom->add_option("--radius-end", esom_sched.radius_end);
  esom->add_option("--checkpoint", esom_checkpoint, "write the trained grid here");
  esom->add_option("--resume", esom_resume, "continue training from a checkpoint");
  esom->add_option("-o,--output", out, "output file (default stdout)");
  esom->callback([&] {
    auto ctx = parse_context(read_file(esom_file));
    auto vectors = context_vectors(ctx);
    if (vectors.empty()) throw ConfigError("context has no objects");
    auto grid = esom_resume.empty()
                    ? init_grid(esom_rows, esom_cols, parse_topology(esom_topology), ctx.attribute_count(), esom_seed,
                                data_bounds(vectors))
                    : grid_from_checkpoint(read_json_file(esom_resume));
    if (esom_sched.radius_start > static_cast<double>(std::max(grid.rows(), grid.cols())))
      esom_sched.radius_start = static_cast<double>(std::max(grid.rows(), grid.cols()));
    esom_sched.radius_end = std::min(esom_sched.radius_end, esom_sched.radius_start);
    std::vector<double> trace;
    grid = train(grid, vectors, esom_sched, &trace);
    if (!esom_checkpoint.empty()) emit(grid_checkpoint(grid).dump(), esom_checkpoint);
    auto j = map_to_json(grid, project(grid, vectors, context_labels(ctx)));
    j["quantizationError"] = trace;
    emit(j.dump(2), out);
  });

  // hmm
  auto* hmm = app.add_subcommand("hmm", "process model or Baum-Welch HMM over event sequences");
  std::string hmm_corpus, hmm_ontology, hmm_lang, hmm_entity, hmm_field, hmm_groups, hmm_sequences;
  std::string hmm_mode = "process", hmm_init = "random", hmm_unmapped = "error", hmm_format = "json";
  std::vector<std::string> hmm_attributes;
  std::size_t hmm_states = 0, hmm_symbols = 0, hmm_max_iter = 200;
  std::uint64_t hmm_seed = 1;
  double hmm_laplace = 0, hmm_threshold = 0, hmm_tol = 1e-6;
  hmm->add_option("--sequences", hmm_sequences, "JSON file with an array of symbol-index arrays");
  hmm->add_option("--symbols", hmm_symbols, "alphabet size for --sequences (default: max index + 1)");
  hmm->add_option("--corpus", hmm_corpus, "corpus XML file");
  hmm->add_option("--ontology", hmm_ontology, "ontology XML file");
  hmm->add_option("--language", hmm_lang);
  hmm->add_option("--entity", hmm_entity, "object-cluster rule identifying traces");
  hmm->add_option("--field", hmm_field, "document field holding the event symbol");
  hmm->add_option("--symbol-attributes", hmm_attributes, "attributes naming the symbol, first match wins");
  hmm->add_option("--groups", hmm_groups, "JSON object mapping field values to symbol groups");
  hmm->add_option("--unmapped", hmm_unmapped, "error or skip")->check(CLI::IsMember({"error", "skip"}));
  hmm->add_option("--mode", hmm_mode, "process or baum_welch")->check(CLI::IsMember({"process", "baum_welch"}));
  hmm->add_option("--states", hmm_states, "hidden states for baum_welch (default: alphabet size)");
  hmm->add_option("--seed", hmm_seed);
  hmm->add_option("--init", hmm_init, "random or uniform")->check(CLI::IsMember({"random", "uniform"}));
  hmm->add_option("--tol", hmm_tol);
  hmm->add_option("--max-iter", hmm_max_iter);
  hmm->add_option("--laplace", hmm_laplace);
  hmm->add_option("--threshold", hmm_threshold, "minimum transition probability exported");
  hmm->add_option("--format", hmm_format, "json, dot or checkpoint")
      ->check(CLI::IsMember({"json", "dot", "checkpoint"}));
  hmm->add_option("-o,--output", out, "output file (default stdout)");
  hmm->callback([&] {
    json q{{"kind", "hmm"}, {"mode", hmm_mode}, {"threshold", hmm_threshold}};
    if (hmm_mode == "baum_welch") {
      q["seed"] = hmm_seed;
      q["init"] = hmm_init;
      q["tol"] = hmm_tol;
      q["maxIter"] = hmm_max_iter;
      if (hmm_states) q["states"] = hmm_states;
    } else {
      q["laplace"] = hmm_laplace;
    }
    if (!hmm_sequences.empty()) {
      auto seqs = read_json_file(hmm_sequences).get<std::vector<Sequence>>();
      std::size_t M = hmm_symbols;
      for (const auto& s : seqs)
        for (auto x : s) M = std::max(M, x + 1);
      HmmModel model;
      std::vector<double> trace;
      if (hmm_mode == "process") {
        model = fit_process_model(seqs, M, {hmm_laplace});
      } else {
        HmmInit init = SeededRandomInit{hmm_seed};
        if (hmm_init == "uniform") init = UniformPerturbedInit{hmm_seed};
        auto r = baum_welch(seqs, hmm_states ? hmm_states : M, M, init, {hmm_tol, hmm_max_iter});
        model = std::move(r.model);
        trace = std::move(r.trace);
      }
      if (hmm_format == "checkpoint") return emit(model_checkpoint(model, trace).dump(2), out);
      auto g = export_hmm_graph(model, hmm_threshold);
      return emit(hmm_format == "dot" ? g.dot : g.json, out);
    }
    if (hmm_corpus.empty() || hmm_ontology.empty() || hmm_entity.empty())
      throw ConfigError("hmm needs --sequences, or --corpus, --ontology and --entity");
    q["entity"] = hmm_entity;
    q["unmapped"] = hmm_unmapped;
    if (!hmm_field.empty()) q["field"] = hmm_field;
    if (!hmm_attributes.empty()) q["attributes"] = split_list(hmm_attributes);
    if (!hmm_groups.empty()) q["groups"] = read_json_file(hmm_groups);
    Inputs in{hmm_corpus, hmm_ontology, hmm_lang, {}, {}, {}};
    auto s = in.session();
    std::vector<std::string> all;
    for (const auto& a : s.ontology.attributes()) all.push_back(a.name);
    if (all.empty()) throw ConfigError("ontology defines no attributes");
    run_phase(s, make_profile(Phase::start_investigation, {{"attributes", all}}));
    auto name = run_phase(s, make_profile(Phase::compose_artifact, q)).name;
    emit(get_artifact(s, name, hmm_format), out);
  });

  // export
  auto* exp = app.add_subcommand("export", "artifact or document from a stored session");
  std::string exp_session, exp_artifact, exp_document, exp_format = "json";
  exp->add_option("--session", exp_session, "session id")->required();
  auto* exp_art_opt = exp->add_option("--artifact", exp_artifact, "artifact name");
  exp->add_option("--document", exp_document, "document or composite id")->excludes(exp_art_opt);
  exp->add_option("--format", exp_format, "json, dot, xml or checkpoint");
  exp->add_option("-o,--output", out, "output file (default stdout)");
  exp->callback([&] {
    SessionStore store(data_dir);
    if (exp_artifact.empty() == exp_document.empty()) throw ConfigError("export needs --artifact or --document");
    emit(store.read(exp_session,
                    [&](const Session& s) {
                      return exp_artifact.empty() ? get_document(s, exp_document, exp_format)
                                                  : get_artifact(s, exp_artifact, exp_format);
                    }),
         out);
  });

  // session
  auto* session = app.add_subcommand("session", "persistent sessions in the data directory");
  session->require_subcommand(1);
  auto* create = session->add_subcommand("create", "create a session from corpus and ontology");
  std::string sc_corpus, sc_ontology, sc_lang;
  create->add_option("--corpus", sc_corpus)->required()->check(CLI::ExistingFile);
  create->add_option("--ontology", sc_ontology)->required()->check(CLI::ExistingFile);
  create->add_option("--language", sc_lang);
  create->callback([&] {
    SessionStore store(data_dir);
    std::cout << store.create(read_file(sc_corpus), read_file(sc_ontology), language_opt(sc_lang)) << '\n';
  });
  auto* list = session->add_subcommand("list", "list session ids");
  list->callback([&] {
    SessionStore store(data_dir);
    for (const auto& id : store.ids()) std::cout << id << '\n';
  });
  auto* run = session->add_subcommand("run", "run a phase from a profile file or a stored profile");
  std::string run_id, run_profile_file, run_stored, run_save;
  run->add_option("id", run_id)->required();
  auto* pf = run->add_option("--profile", run_profile_file, "profile JSON file ('-' for stdin)");
  run->add_option("--stored", run_stored, "name of a stored profile")->excludes(pf);
  run->add_option("--save-as", run_save, "also store the profile under this name");
  run->callback([&] {
    SessionStore store(data_dir);
    std::string name;
    if (!run_stored.empty()) {
      name = store.run_profile(run_id, run_stored);
    } else {
      if (run_profile_file.empty()) throw ConfigError("session run needs --profile or --stored");
      auto p = profile_from_json(read_json_file(run_profile_file));
      if (!run_save.empty()) store.write(run_id, [&](Session& s) { s.profiles[run_save] = p; });
      name = store.run_phase(run_id, p);
    }
    std::cout << name << '\n';
  });
  auto* show = session->add_subcommand("show", "session summary");
  std::string show_id;
  show->add_option("id", show_id)->required();
  show->callback([&] {
    SessionStore store(data_dir);
    emit(store.read(show_id, [](const Session& s) { return detail::session_summary(s).dump(2); }), "-");
  });
  auto* rep = session->add_subcommand("replay", "re-run the audit log and compare artifacts byte by byte");
  std::string rep_id;
  rep->add_option("id", rep_id)->required();
  rep->callback([&] {
    SessionStore store(data_dir);
    auto mismatches = store.read(rep_id, [](const Session& s) {
      auto r = replay(s);
      std::vector<std::string> bad;
      for (const auto& name : s.artifact_order) {
        const auto& a = s.artifact(name);
        const auto& b = r.artifact(name);
        if (a.json_payload != b.json_payload || a.dot_payload != b.dot_payload || a.checkpoint != b.checkpoint)
          bad.push_back(name);
      }
      return bad;
    });
    for (const auto& m : mismatches) std::cout << "MISMATCH " << m << '\n';
    if (!mismatches.empty()) throw InternalError(std::to_string(mismatches.size()) + " artifacts differ on replay");
    std::cout << "identical\n";
  });

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP service over the session store");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->callback([&] {
    SessionStore store(data_dir);
    httplib::Server server;
    register_routes(server, store);
    std::cerr << "listening on " << host << ":" << port << ", data in " << store.dir().string() << '\n';
    if (!server.listen(host, port)) throw ResourceError("cannot listen on " + host + ":" + std::to_string(port));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error (" << e.kind() << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
