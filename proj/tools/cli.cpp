#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "asam/dataset.hpp"
#include "asam/editor.hpp"
#include "asam/errors.hpp"
#include "asam/eval.hpp"
#include "asam/json_io.hpp"
#include "asam/model.hpp"
#include "asam/rcsl.hpp"

namespace asam::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Registers flags so that a --config JSON document can fill any flag that
// was not given on the command line, and so the resolved values can be
// written next to the outputs.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON run config; flags override its values");
  }

  template <typename T>
  CLI::Option* add(const std::string& name, T& target, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + name, target, help);
    std::string key = name;
    std::replace(key.begin(), key.end(), '-', '_');
    entries_.push_back({key, opt, [&target](const json& j) { target = j.get<T>(); },
                        [&target] { return json(target); }});
    return opt;
  }

  void apply_config_file() {
    if (config_path_.empty()) return;
    const json doc = io::read_json_file(config_path_);
    if (!doc.is_object()) throw ConfigError("--config must hold a JSON object");
    for (auto& e : entries_) {
      if (e.option->count() > 0 || !doc.contains(e.key)) continue;
      try {
        e.set(doc.at(e.key));
      } catch (const json::exception& ex) {
        throw ConfigError("--config field '" + e.key + "': " + ex.what());
      }
    }
  }

  json resolved(const std::string& command) const {
    json out = {{"command", command}};
    for (const auto& e : entries_) out[e.key] = e.get();
    return out;
  }

 private:
  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<void(const json&)> set;
    std::function<json()> get;
  };
  CLI::App* app_;
  std::string config_path_;
  std::vector<Entry> entries_;
};

fs::path sidecar_config_path(const fs::path& out) {
  return out.parent_path() / (out.stem().string() + ".run_config.json");
}

void require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

// ---------------------------------------------------------------------------

struct GenDataCommand {
  int units = 10;
  int variants = 6;
  double noise = 0.08;
  std::uint64_t seed = 0;
  int classes = 10;
  int visual = 16;
  int text = 16;
  std::string out;

  void bind(Flags& f) {
    f.add("units", units, "number of knowledge units");
    f.add("variants", variants, "variants per unit (>= 2)");
    f.add("noise", noise, "Gaussian noise scale around each prototype");
    f.add("seed", seed, "generation seed");
    f.add("classes", classes, "number of target classes");
    f.add("visual", visual, "visual feature dimension");
    f.add("text", text, "text feature dimension");
    f.add("out", out, "output knowledge-base JSON");
  }

  int run(const Flags& f, std::ostream& os) const {
    require_path(out, "--out");
    DatasetConfig c;
    c.n_units = units;
    c.m_variants = variants;
    c.noise_scale = noise;
    c.seed = seed;
    c.classes = classes;
    c.visual = visual;
    c.text = text;
    const KnowledgeBase kb = generate_knowledge_base(c);
    save_kb(kb, out);
    io::write_json_file(sidecar_config_path(out), f.resolved("gen-data"));
    os << json{{"units", kb.n_units()}, {"out", out}}.dump() << '\n';
    return kOk;
  }
};

struct TrainCommand {
  std::string kb;
  int epochs = 300;
  double lr = 1e-2;
  int batch_size = 16;
  std::uint64_t seed = 0;
  int embed = 12;
  int hidden = 24;
  std::string out;

  void bind(Flags& f) {
    f.add("kb", kb, "knowledge-base JSON");
    f.add("epochs", epochs, "training epochs");
    f.add("lr", lr, "Adam learning rate");
    f.add("batch-size", batch_size, "minibatch size");
    f.add("seed", seed, "init and shuffling seed");
    f.add("embed", embed, "per-modality embedding width");
    f.add("hidden", hidden, "hidden / edit-layer width");
    f.add("out", out, "output model checkpoint JSON");
  }

  int run(const Flags& f, std::ostream& os) const {
    require_path(kb, "--kb");
    require_path(out, "--out");
    const KnowledgeBase base = load_kb(kb);
    ModelDims dims;
    dims.visual = base.config.visual;
    dims.text = base.config.text;
    dims.classes = base.classes();
    dims.embed = embed;
    dims.hidden = hidden;
    ToyModel model = ToyModel::initialized(dims, seed);
    TrainOptions opt;
    opt.epochs = epochs;
    opt.lr = lr;
    opt.batch_size = batch_size;
    opt.seed = seed;
    const TrainResult r = train_base(model, base, opt);
    save_model(model, out);
    io::write_json_file(sidecar_config_path(out), f.resolved("train"));
    os << json{{"accuracy", r.accuracy}, {"final_loss", r.final_loss}, {"epochs", r.epochs}}.dump() << '\n';
    return kOk;
  }
};

// Flags shared by every command that runs the editor.
struct EditFlags {
  double eps = 1e-3;
  int n_variants = 4;
  double tau = 4.0;
  double beta = 10.0;
  double lr = 1e-2;
  int max_steps = 200;
  int loc_batch = 16;
  std::string norm = "l2";
  std::string align = "rcsl";
  std::uint64_t seed = 0;

  void bind(Flags& f) {
    f.add("eps", eps, "latent perturbation budget");
    f.add("n-variants", n_variants, "adversarial variants per step");
    f.add("tau", tau, "singular-value softmax temperature");
    f.add("beta", beta, "alignment loss weight");
    f.add("lr", lr, "Adam learning rate for the edit layer");
    f.add("max-steps", max_steps, "maximum optimization steps per edit");
    f.add("loc-batch", loc_batch, "out-of-scope samples per step");
    f.add("norm", norm, "perturbation norm: l2 or linf");
    f.add("align", align, "alignment objective: rcsl, cosine, l2norm or none");
    f.add("seed", seed, "editing seed");
  }

  EditConfig config() const {
    EditConfig c;
    c.eps = eps;
    c.n_variants = n_variants;
    c.tau_align = tau;
    c.beta = beta;
    c.lr = lr;
    c.max_steps = max_steps;
    c.loc_batch_size = loc_batch;
    c.norm = lar::norm_kind_from_string(norm);
    c.align_kind = alignment_kind_from_string(align);
    if (c.align_kind == AlignmentKind::none) {
      c.align_kind = AlignmentKind::rcsl;
      c.beta = 0;
    }
    c.seed = seed;
    c.validate();
    return c;
  }
};

json metrics_json(double rel, double gen, double loc, const std::vector<eval::RequestMetrics>& per,
                  const EditConfig& cfg) {
  eval::MetricsReport report;
  report.rel = rel;
  report.gen = gen;
  report.loc = loc;
  report.n_requests = static_cast<int>(per.size());
  report.per_request = per;
  report.config = to_json(cfg);
  report.seed = cfg.seed;
  return eval::to_json(report);
}

struct EditCommand {
  std::string model;
  std::string kb;
  int unit = -1;
  int new_label = -1;
  std::string out_dir;
  EditFlags edit;

  void bind(Flags& f) {
    f.add("model", model, "pre-edit model checkpoint");
    f.add("kb", kb, "knowledge-base JSON");
    f.add("unit", unit, "unit id to edit");
    f.add("new-label", new_label, "target label (default: drawn from --seed)");
    f.add("out-dir", out_dir, "output directory");
    edit.bind(f);
  }

  int run(const Flags& f, std::ostream& os) const {
    require_path(model, "--model");
    require_path(kb, "--kb");
    require_path(out_dir, "--out-dir");
    const EditConfig cfg = edit.config();
    const KnowledgeBase base = load_kb(kb);
    ToyModel m = load_model(model);
    const KnowledgeUnit& u = base.unit(unit);
    int label = new_label;
    if (label < 0) {
      Rng rng(cfg.seed);
      std::uniform_int_distribution<int> pick(0, base.classes() - 2);
      const int r = pick(rng);
      label = r < u.label ? r : r + 1;
    }
    const EditRequest req = make_edit_request(base, unit, label, cfg.seed);
    const fs::path dir(out_dir);
    io::write_json_file(dir / "run_config.json", f.resolved("edit"));

    const ToyModel pre = m;
    EditTrace trace;
    try {
      trace = asam::edit(m, pre, base, req, cfg);
    } catch (const EditFailure& e) {
      write_trace_jsonl(e.trace(), dir / "trace.jsonl");
      throw;
    }
    write_trace_jsonl(trace, dir / "trace.jsonl");
    save_model(m, dir / "edited_model.json");
    eval::RequestMetrics rm{req.unit_id, req.new_label, trace.final_metrics.rel, trace.final_metrics.gen,
                            trace.final_metrics.loc, trace.steps_taken};
    const json metrics = metrics_json(rm.rel, rm.gen, rm.loc, {rm}, cfg);
    io::write_json_file(dir / "metrics.json", metrics);
    os << json{{"rel", rm.rel}, {"gen", rm.gen}, {"loc", rm.loc}, {"steps", trace.steps_taken}}.dump() << '\n';
    return kOk;
  }
};

std::string sequential_trace_jsonl(const std::vector<EditTrace>& traces) {
  std::ostringstream out;
  for (std::size_t k = 0; k < traces.size(); ++k) {
    for (const auto& r : traces[k].steps) {
      json j = to_json(r);
      j["edit"] = k;
      j["unit_id"] = traces[k].unit_id;
      out << j.dump() << '\n';
    }
  }
  return out.str();
}

struct EditSeqCommand {
  std::string model;
  std::string kb;
  int n_edits = 10;
  std::string out_dir;
  EditFlags edit;

  void bind(Flags& f) {
    f.add("model", model, "pre-edit model checkpoint");
    f.add("kb", kb, "knowledge-base JSON");
    f.add("n-edits", n_edits, "number of sequential edits on distinct units");
    f.add("out-dir", out_dir, "output directory");
    edit.bind(f);
  }

  int run(const Flags& f, std::ostream& os) const {
    require_path(model, "--model");
    require_path(kb, "--kb");
    require_path(out_dir, "--out-dir");
    const EditConfig cfg = edit.config();
    const KnowledgeBase base = load_kb(kb);
    ToyModel m = load_model(model);
    const ToyModel pre = m;
    const auto requests = make_edit_sequence(base, n_edits, cfg.seed);
    const fs::path dir(out_dir);
    io::write_json_file(dir / "run_config.json", f.resolved("edit-seq"));

    SequentialResult result;
    try {
      result = sequential_edit(m, base, requests, cfg);
    } catch (const SequentialEditFailure& e) {
      io::write_text_file(dir / "trace.jsonl", sequential_trace_jsonl(e.partial().traces));
      throw;
    }
    io::write_text_file(dir / "trace.jsonl", sequential_trace_jsonl(result.traces));
    save_model(m, dir / "edited_model.json");

    std::vector<eval::RequestMetrics> per;
    for (std::size_t k = 0; k < requests.size(); ++k) {
      const EditRequest* one = &requests[k];
      const int edited[] = {requests[k].unit_id};
      per.push_back({requests[k].unit_id, requests[k].new_label, eval::reliability(m, std::span(one, 1)),
                     eval::generality(m, std::span(one, 1)), eval::locality(m, pre, base, edited),
                     result.traces[k].steps_taken});
    }
    const MetricsSnapshot& last = result.running.back();
    json metrics = metrics_json(last.rel, last.gen, last.loc, per, cfg);
    json running = json::array();
    for (const auto& s : result.running) running.push_back({{"rel", s.rel}, {"gen", s.gen}, {"loc", s.loc}});
    metrics["running"] = std::move(running);
    io::write_json_file(dir / "metrics.json", metrics);
    os << json{{"rel", last.rel}, {"gen", last.gen}, {"loc", last.loc}, {"n_edits", requests.size()}}.dump()
       << '\n';
    return kOk;
  }
};

struct SweepCommand {
  std::string model;
  std::string kb;
  std::string param;
  std::vector<double> values;
  int seeds = 3;
  int n_edits = 5;
  std::string out;
  EditFlags edit;

  void bind(Flags& f) {
    f.add("model", model, "pre-edit model checkpoint");
    f.add("kb", kb, "knowledge-base JSON");
    f.add("param", param, "swept hyperparameter: eps, beta or tau");
    f.add("values", values, "comma-separated values")->delimiter(',');
    f.add("seeds", seeds, "paired seeds per value");
    f.add("n-edits", n_edits, "single edits per seed");
    f.add("out", out, "output CSV");
    edit.bind(f);
  }

  int run(const Flags& f, std::ostream& os) const {
    if (param != "eps" && param != "beta" && param != "tau") {
      throw ConfigError("--param must be eps, beta or tau");
    }
    if (values.empty()) throw ConfigError("--values must list at least one value");
    if (seeds < 1) throw ConfigError("--seeds must be >= 1");
    require_path(model, "--model");
    require_path(kb, "--kb");
    require_path(out, "--out");
    const EditConfig base_cfg = edit.config();
    const KnowledgeBase base = load_kb(kb);
    const ToyModel m = load_model(model);

    std::ostringstream csv;
    csv << std::setprecision(17);
    csv << "param,value,seed,rel,gen,loc\n";
    for (double v : values) {
      EditConfig cfg = base_cfg;
      if (param == "eps") cfg.eps = v;
      if (param == "beta") cfg.beta = v;
      if (param == "tau") cfg.tau_align = v;
      cfg.validate();
      for (int s = 0; s < seeds; ++s) {
        cfg.seed = base_cfg.seed + static_cast<std::uint64_t>(s);
        const auto requests = make_edit_sequence(base, n_edits, cfg.seed);
        const auto report = eval::ablation_alignment(cfg.align_kind, m, base, requests, cfg);
        csv << param << ',' << v << ',' << cfg.seed << ',' << report.rel << ',' << report.gen << ','
            << report.loc << '\n';
      }
    }
    io::write_text_file(out, csv.str());
    io::write_json_file(sidecar_config_path(out), f.resolved("sweep"));
    os << json{{"rows", values.size() * static_cast<std::size_t>(seeds)}, {"out", out}}.dump() << '\n';
    return kOk;
  }
};

struct GramCommand {
  std::string model;
  std::string kb;
  int unit = 0;
  int label = -1;
  std::string source = "lar";
  double eps = 1e-3;
  int n_variants = 4;
  double tau = 4.0;
  std::uint64_t seed = 0;
  std::string out;

  void bind(Flags& f) {
    f.add("model", model, "model checkpoint");
    f.add("kb", kb, "knowledge-base JSON");
    f.add("unit", unit, "unit id");
    f.add("label", label, "class the variants attack (default: the model's prediction)");
    f.add("source", source, "rows: lar (anchor + adversarial variants) or unit (the unit's variants)");
    f.add("eps", eps, "perturbation budget for --source lar");
    f.add("n-variants", n_variants, "variants for --source lar");
    f.add("tau", tau, "temperature reported with the batch");
    f.add("seed", seed, "variant seed");
    f.add("out", out, "output JSON");
  }

  int run(const Flags& f, std::ostream& os) const {
    require_path(model, "--model");
    require_path(kb, "--kb");
    require_path(out, "--out");
    const KnowledgeBase base = load_kb(kb);
    const ToyModel m = load_model(model);
    const KnowledgeUnit& u = base.unit(unit);
    rcsl::AlignmentBatch batch;
    if (source == "lar") {
      const Variant& x = u.variants.front();
      const Vector z = m.encode(x.x_v, x.x_t).z;
      const int y = label >= 0 ? label : m.predict(x.x_v, x.x_t);
      const auto set = lar::generate_variants(m, z, y, {n_variants, eps, lar::NormKind::l2, 1.0, seed});
      batch = rcsl::build_batch(m, set, tau);
    } else if (source == "unit") {
      Matrix h(static_cast<Eigen::Index>(u.variants.size()), m.dims.hidden);
      for (std::size_t i = 0; i < u.variants.size(); ++i) {
        const auto& x = u.variants[i];
        h.row(static_cast<Eigen::Index>(i)) = m.hidden_at_edit_layer(m.encode(x.x_v, x.x_t).z).transpose();
      }
      batch = rcsl::make_batch(h, tau);
    } else {
      throw ConfigError("--source must be lar or unit");
    }
    rcsl::write_gram_export(batch, out);
    io::write_json_file(sidecar_config_path(out), f.resolved("gram"));
    const auto report = rcsl::rank1_check(batch, 1e-6);
    os << json{{"min_offdiag", report.min_gram_entry},
               {"rank", report.rank},
               {"loss", rcsl::alignment_loss(batch).loss}}
              .dump()
       << '\n';
    return kOk;
  }
};

struct SweepReprCommand {
  std::string model;
  std::string kb;
  int unit = 0;
  std::vector<double> eps_list{1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  int k = 8;
  std::uint64_t seed = 0;
  std::string out;

  void bind(Flags& f) {
    f.add("model", model, "model checkpoint");
    f.add("kb", kb, "knowledge-base JSON");
    f.add("unit", unit, "unit whose first variant is perturbed");
    f.add("eps-list", eps_list, "comma-separated ascending magnitudes")->delimiter(',');
    f.add("k", k, "perturbed latents per magnitude");
    f.add("seed", seed, "direction seed");
    f.add("out", out, "output JSON");
  }

  int run(const Flags& f, std::ostream& os) const {
    require_path(model, "--model");
    require_path(kb, "--kb");
    require_path(out, "--out");
    const KnowledgeBase base = load_kb(kb);
    const ToyModel m = load_model(model);
    eval::perturbation_sweep_export(m, base.unit(unit).variants.front(), eps_list, k, seed, out);
    io::write_json_file(sidecar_config_path(out), f.resolved("sweep-repr"));
    os << json{{"rows", eps_list.size() * static_cast<std::size_t>(k)}, {"out", out}}.dump() << '\n';
    return kOk;
  }
};

template <typename Command>
struct Registered {
  Command command;
  CLI::App* app = nullptr;
  std::unique_ptr<Flags> flags;

  Registered(CLI::App& root, const std::string& name, const std::string& help) {
    app = root.add_subcommand(name, help);
    flags = std::make_unique<Flags>(app);
    command.bind(*flags);
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust knowledge editing on a toy multimodal model", "asam"};
  app.require_subcommand(1);
  Registered<GenDataCommand> gen(app, "gen-data", "generate a synthetic knowledge base");
  Registered<TrainCommand> train(app, "train", "train the base model");
  Registered<EditCommand> edit(app, "edit", "apply one edit");
  Registered<EditSeqCommand> edit_seq(app, "edit-seq", "apply a sequence of edits");
  Registered<SweepCommand> sweep(app, "sweep", "metrics over a hyperparameter grid");
  Registered<GramCommand> gram(app, "gram", "export the Gram matrix of edit-layer hidden states");
  Registered<SweepReprCommand> sweep_repr(app, "sweep-repr", "export hidden states under growing perturbations");

  std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  auto dispatch = [&](auto& reg) -> std::optional<int> {
    if (!reg.app->parsed()) return std::nullopt;
    reg.flags->apply_config_file();
    return reg.command.run(*reg.flags, out);
  };

  try {
    for (auto result : {dispatch(gen), dispatch(train), dispatch(edit), dispatch(edit_seq), dispatch(sweep),
                        dispatch(gram), dispatch(sweep_repr)}) {
      if (result) return *result;
    }
    err << "error: no command given\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const TrainingFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const DegenerateSpectrumError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace asam::cli
