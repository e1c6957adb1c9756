#include "rbamc/commands.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <ostream>

#include "rbamc/byteio.hpp"
#include "rbamc/checkpoint.hpp"
#include "rbamc/complexity.hpp"
#include "rbamc/datagen.hpp"
#include "rbamc/errors.hpp"
#include "rbamc/reports.hpp"
#include "rbamc/training.hpp"

namespace rbamc {

namespace {

std::vector<std::uint8_t> as_bytes(const std::string& s) { return {s.begin(), s.end()}; }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

const std::vector<std::string> kVariants{"real", "bnn", "bnn2real", "rbnn"};

std::vector<std::string> modclass_names() {
    std::vector<std::string> names;
    for (ModClass m : all_modclasses()) names.push_back(to_string(m));
    return names;
}

/// Frame selection shared by train and eval.
struct SplitFlags {
    double train_fraction = 0.75;
    std::uint64_t split_seed = 0;

    void add(CLI::App* app) {
        app->add_option("--train-fraction", train_fraction, "Share of every (class, SNR) cell used for training")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
        app->add_option("--split-seed", split_seed, "Seed of the train/test split")->capture_default_str();
    }
};

struct GenFlags {
    std::vector<std::string> classes = modclass_names();
    int snr_min = -20, snr_max = 30, snr_step = 2;
    std::size_t frames = 1000;
    std::uint64_t seed = 0;
    std::size_t sps = 8;
    double rolloff = 0.35;
    std::string out;
};

struct TrainFlags {
    std::string variant = "real";
    std::string data;
    std::size_t epochs = 200;
    std::size_t batch = 256;
    double lr = 0.01;
    double lr_min = 0.0;
    double momentum = 0.9;
    std::size_t restart_period = 0;
    std::uint64_t seed = 0;
    std::size_t width = 32;
    int bag_member = -1;
    bool no_test_eval = false;
    std::string out_ckpt;
    std::string log;
    SplitFlags split;
};

struct EvalFlags {
    std::vector<std::string> ckpts;
    std::string data;
    std::string report;
    std::string format = "csv";
    std::string subset = "all";
    SplitFlags split;
};

struct AnalyzeFlags {
    std::string variant = "real";
    std::size_t classes = 24;
    std::size_t width = 32;
    std::size_t bag = 1;
    bool include_bn = false;
    std::string format = "csv";
    std::string out;
};

struct ConvertFlags {
    std::string in;
    std::string to;
    std::string out;
};

void write_text(const std::string& path, const std::string& text) { write_file_atomic(path, as_bytes(text)); }

int cmd_gen_data(const GenFlags& f, std::ostream& out) {
    GenConfig cfg;
    cfg.classes.clear();
    for (const auto& c : f.classes) cfg.classes.push_back(parse_modclass(c));
    cfg.snr_grid = GenConfig::snr_grid_range(f.snr_min, f.snr_max, f.snr_step);
    cfg.frames_per_cell = f.frames;
    cfg.samples_per_symbol = f.sps;
    cfg.rolloff = f.rolloff;
    cfg.seed = f.seed;
    const DatasetSummary s = gen_dataset(cfg, f.out);
    out << "wrote " << s.frames << " frames (" << s.classes << " classes x " << s.snrs << " SNR bins x " << f.frames
        << ") to " << f.out << ", " << s.bytes << " bytes, fnv1a " << hex64(fnv1a(read_file(f.out))) << '\n';
    return kExitOk;
}

int cmd_train(const TrainFlags& f, std::ostream& out) {
    const Dataset ds = load_dataset(f.data);
    if (ds.frames.empty()) throw DomainError("dataset " + f.data + " holds no frames");
    const SplitIndices sp = split(ds, f.split.train_fraction, f.split.split_seed);
    const ModelVariant variant = parse_variant(f.variant);
    const ArchSpec arch = ArchSpec::lresnet18a(ds.num_classes(), f.width);

    TrainConfig cfg;
    cfg.lr0 = f.lr;
    cfg.lr_min = f.lr_min;
    cfg.momentum = f.momentum;
    cfg.epochs = f.epochs;
    cfg.batch_size = f.batch;
    cfg.restart_period = f.restart_period;
    cfg.seed = f.seed;
    cfg.evaluate_test = !f.no_test_eval;
    cfg.validate();

    std::vector<std::size_t> train_idx = sp.train;
    std::uint64_t model_seed = f.seed;
    if (f.bag_member >= 0) {
        BagMember plan = bag_member(sp.train, f.seed, static_cast<std::size_t>(f.bag_member));
        train_idx = std::move(plan.sample);
        model_seed = plan.seed;
        cfg.seed = plan.seed;
    }
    if (cfg.epochs > 0 && train_idx.empty()) throw DomainError("training split is empty");

    Model model(variant, arch, model_seed);
    out << "training " << to_string(variant) << " (width " << f.width << ") on " << train_idx.size()
        << " frames, testing on " << sp.test.size() << '\n';
    const auto logs = train(model, ds, train_idx, sp.test, cfg, [&](const EpochLog& l) {
        char line[256];
        std::snprintf(line, sizeof line,
                      "epoch %zu lr %.6f loss %.5f train_acc %.4f test_acc %.4f cos_phi %.4f flips %.4f\n", l.epoch,
                      l.lr, l.loss, l.train_acc, l.test_acc, l.mean_cos_phi, l.flip_fraction);
        out << line << std::flush;
    });
    const std::string csv = epoch_log_csv(logs);
    CheckpointMeta meta;
    meta.epochs_trained = static_cast<std::uint32_t>(f.epochs);
    meta.seed = f.seed;
    meta.log_digest = fnv1a(as_bytes(csv));
    if (!f.log.empty()) write_text(f.log, csv);
    save_checkpoint(f.out_ckpt, model, meta);
    // Read back so exit 0 means the artifact validated.
    load_checkpoint(f.out_ckpt);
    out << "wrote " << f.out_ckpt << " (fnv1a " << hex64(fnv1a(read_file(f.out_ckpt))) << ")\n";
    return kExitOk;
}

std::vector<std::size_t> select_frames(const Dataset& ds, const std::string& subset, const SplitFlags& s) {
    if (subset == "all") {
        std::vector<std::size_t> idx(ds.frames.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        return idx;
    }
    const SplitIndices sp = split(ds, s.train_fraction, s.split_seed);
    return subset == "train" ? sp.train : sp.test;
}

int cmd_eval(const EvalFlags& f, std::ostream& out) {
    Ensemble ens;
    for (const auto& path : f.ckpts) {
        Checkpoint ck = load_checkpoint(path);
        if (!ens.members.empty() && !(ck.model.arch() == ens.members.front().arch() &&
                                      ck.model.variant() == ens.members.front().variant()))
            throw DomainError("checkpoint " + path + " is incompatible with " + f.ckpts.front() + " (" +
                              to_string(ck.model.variant()) + ", " + std::to_string(ck.model.arch().num_classes) +
                              " classes vs " + to_string(ens.members.front().variant()) + ", " +
                              std::to_string(ens.members.front().arch().num_classes) + " classes)");
        ens.members.push_back(std::move(ck.model));
    }
    const Dataset ds = load_dataset(f.data);
    if (ds.frames.empty()) throw DomainError("dataset " + f.data + " holds no frames");
    if (ds.num_classes() != ens.members.front().arch().num_classes)
        throw DomainError("dataset has " + std::to_string(ds.num_classes()) + " classes but " + f.ckpts.front() +
                          " outputs " + std::to_string(ens.members.front().arch().num_classes));
    const std::vector<std::size_t> idx = select_frames(ds, f.subset, f.split);
    if (idx.empty()) throw DomainError("selected subset '" + f.subset + "' is empty");
    const EvalReport r = ens.members.size() == 1 ? evaluate(ens.members.front(), ds, idx) : evaluate(ens, ds, idx);
    const std::string text = format_report(r, parse_format(f.format));
    if (f.report.empty()) {
        out << text;
    } else {
        write_text(f.report, text);
        char line[128];
        std::snprintf(line, sizeof line, "accuracy %.4f over %zu frames (%zu member%s)\n", r.accuracy(), r.total,
                      ens.members.size(), ens.members.size() == 1 ? "" : "s");
        out << line;
    }
    return kExitOk;
}

int cmd_analyze(const AnalyzeFlags& f, std::ostream& out) {
    CountingRules rules;
    rules.include_bn = f.include_bn;
    const ComplexityReport r =
        analyze(ArchSpec::lresnet18a(f.classes, f.width), parse_variant(f.variant), rules, f.bag);
    const std::string text = format_report(r, parse_format(f.format));
    if (f.out.empty())
        out << text;
    else
        write_text(f.out, text);
    return kExitOk;
}

int cmd_convert(const ConvertFlags& f, std::ostream& out) {
    const Checkpoint src = load_checkpoint(f.in);
    const Model converted = convert_model(src.model, parse_variant(f.to));
    save_checkpoint(f.out, converted, src.meta);
    load_checkpoint(f.out);
    out << "converted " << f.in << " (" << to_string(src.model.variant()) << ") to " << f.out << " ("
        << to_string(converted.variant()) << ")\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Binary and rotated-binary modulation classifiers", "amc"};
    app.require_subcommand(1);

    GenFlags gen;
    auto* g = app.add_subcommand("gen-data", "Generate a synthetic I/Q dataset (AMCD file)");
    g->add_option("--classes", gen.classes, "Modulation classes")
        ->delimiter(',')
        ->check(CLI::IsMember(modclass_names()))
        ->capture_default_str();
    g->add_option("--snr-min", gen.snr_min, "Lowest SNR bin in dB")->capture_default_str();
    g->add_option("--snr-max", gen.snr_max, "Highest SNR bin in dB")->capture_default_str();
    g->add_option("--snr-step", gen.snr_step, "SNR bin spacing in dB")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    g->add_option("--frames", gen.frames, "Frames per (class, SNR) bin")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    g->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
    g->add_option("--sps", gen.sps, "Samples per symbol")->check(CLI::PositiveNumber)->capture_default_str();
    g->add_option("--rolloff", gen.rolloff, "RRC roll-off")->check(CLI::Range(0.01, 1.0))->capture_default_str();
    g->add_option("--out", gen.out, "Output dataset path")->required();

    TrainFlags tr;
    auto* t = app.add_subcommand("train", "Train a model and write a checkpoint");
    t->add_option("--variant", tr.variant, "Model variant")->check(CLI::IsMember(kVariants))->capture_default_str();
    t->add_option("--data", tr.data, "Dataset (AMCD)")->required();
    t->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
    t->add_option("--batch", tr.batch, "Mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--lr", tr.lr, "Initial learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--lr-min", tr.lr_min, "Cosine floor")->check(CLI::NonNegativeNumber)->capture_default_str();
    t->add_option("--momentum", tr.momentum, "SGD momentum")->check(CLI::Range(0.0, 0.999999))->capture_default_str();
    t->add_option("--restart-period", tr.restart_period, "Cosine restart period in epochs (0: none)")
        ->capture_default_str();
    t->add_option("--seed", tr.seed, "Seed for initialization, shuffling and dropout")->capture_default_str();
    t->add_option("--width", tr.width, "Base channel width (32: full network)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    t->add_option("--bag-member", tr.bag_member, "Train ensemble member B on its bootstrap resample")
        ->check(CLI::NonNegativeNumber);
    t->add_flag("--no-test-eval", tr.no_test_eval, "Skip the per-epoch test evaluation");
    t->add_option("--out-ckpt", tr.out_ckpt, "Output checkpoint (AMCW)")->required();
    t->add_option("--log", tr.log, "Per-epoch CSV log");
    tr.split.add(t);

    EvalFlags ev;
    auto* e = app.add_subcommand("eval", "Evaluate one checkpoint or an ensemble");
    e->add_option("--ckpt", ev.ckpts, "Checkpoint; repeat for ensemble averaging")->required();
    e->add_option("--data", ev.data, "Dataset (AMCD)")->required();
    e->add_option("--report", ev.report, "Report path (stdout when omitted)");
    e->add_option("--format", ev.format, "Report format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    e->add_option("--subset", ev.subset, "Frames to evaluate")
        ->check(CLI::IsMember({"all", "train", "test"}))
        ->capture_default_str();
    ev.split.add(e);

    AnalyzeFlags an;
    auto* a = app.add_subcommand("analyze", "Parameter, operation and memory counts");
    a->add_option("--variant", an.variant, "Model variant")->check(CLI::IsMember(kVariants))->capture_default_str();
    a->add_option("--classes", an.classes, "Output classes")->check(CLI::Range(2, 65535))->capture_default_str();
    a->add_option("--width", an.width, "Base channel width")->check(CLI::PositiveNumber)->capture_default_str();
    a->add_option("--bag", an.bag, "Ensemble size")->check(CLI::PositiveNumber)->capture_default_str();
    a->add_flag("--include-bn", an.include_bn, "Count batch-norm parameters");
    a->add_option("--format", an.format, "Report format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    a->add_option("--out", an.out, "Report path (stdout when omitted)");

    ConvertFlags cv;
    auto* c = app.add_subcommand("convert", "Re-tag a real checkpoint as bnn or rbnn");
    c->add_option("--in-ckpt", cv.in, "Source checkpoint (real variant)")->required();
    c->add_option("--to", cv.to, "Target variant")->check(CLI::IsMember({"bnn", "rbnn"}))->required();
    c->add_option("--out-ckpt", cv.out, "Output checkpoint")->required();

    std::vector<std::string> argv_store{"amc"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : argv_store) argv.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (g->parsed()) return cmd_gen_data(gen, out);
        if (t->parsed()) return cmd_train(tr, out);
        if (e->parsed()) return cmd_eval(ev, out);
        if (a->parsed()) return cmd_analyze(an, out);
        if (c->parsed()) return cmd_convert(cv, out);
    } catch (const IoError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitIo;
    } catch (const FormatError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitFormat;
    } catch (const NumericError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitNumeric;
    } catch (const DomainError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitFormat;
    } catch (const ShapeError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitFormat;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace rbamc
