// mgtd - machine-generated text detection toolkit.
//
// Subcommands wire the library modules into train/extract/predict/evaluate
// workflows. Defaults reproduce the reference configuration (TF-IDF n-grams
// 2-3 capped at 5000 features, squared-hinge SVM with C=0.5, sequence
// classifier trained 10 epochs with AdamW at lr 1e-4, batch 8).

#include <clocale>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "mgtd/candace_train.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/features.hpp"
#include "mgtd/metrics.hpp"
#include "mgtd/ngram_lm.hpp"
#include "mgtd/svm.hpp"
#include "mgtd/tfidf.hpp"

namespace {

using namespace mgtd;

// Relative model paths fall back to $MGTD_MODEL_DIR when not found in the
// working directory.
std::string resolve_model_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (fs::exists(path)) return path;
    if (const char* dir = std::getenv("MGTD_MODEL_DIR");
        dir != nullptr && fs::path(path).is_relative()) {
        fs::path candidate = fs::path(dir) / path;
        if (fs::exists(candidate)) return candidate.string();
    }
    return path;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    return out;
}

std::string read_tag(const std::string& path) {
    auto in = open_input(path);
    std::string tag;
    std::getline(in, tag);
    return tag;
}

// id -> encoded label from any CSV that has `id` and `label` columns.
std::unordered_map<std::string, int> load_label_map(const std::string& path) {
    auto rows = csv::read_file(path);
    if (rows.empty()) throw SchemaError(path + ": missing header row");
    const auto& header = rows.front();
    std::ptrdiff_t id_col = -1, label_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "id") id_col = static_cast<std::ptrdiff_t>(i);
        if (header[i] == "label") label_col = static_cast<std::ptrdiff_t>(i);
    }
    if (id_col < 0) throw SchemaError(path + ": missing column 'id'");
    if (label_col < 0) throw SchemaError(path + ": missing column 'label'");
    std::unordered_map<std::string, int> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() <= static_cast<std::size_t>(std::max(id_col, label_col)))
            throw ParseError(path + ": row " + std::to_string(r) +
                             " has too few fields");
        if (!out.emplace(row[static_cast<std::size_t>(id_col)],
                         encode_label(row[static_cast<std::size_t>(label_col)], r))
                 .second)
            throw DuplicateError(path + ": duplicate id '" +
                                 row[static_cast<std::size_t>(id_col)] + "'");
    }
    return out;
}

void join_labels(const std::vector<FeatureRecord>& records,
                 const std::unordered_map<std::string, int>& labels,
                 const std::string& what, std::vector<FeatureMatrix>& x,
                 std::vector<int>& y) {
    for (const auto& rec : records) {
        auto it = labels.find(rec.id);
        if (it == labels.end())
            throw ValueError(what + ": no label for id '" + rec.id + "'");
        x.push_back(rec.matrix);
        y.push_back(it->second);
    }
}

int cmd_train_svm(const std::string& train_csv, const std::string& model_out,
                  double c, std::size_t max_features, std::size_t max_iter,
                  double tol) {
    Dataset train = load_csv(train_csv, /*expect_labels=*/true);
    auto [n0, n1] = class_counts(train);
    std::cerr << "loaded " << train.documents.size() << " documents (" << n0
              << " human, " << n1 << " machine)\n";

    TfidfModel tfidf = tfidf_fit(train, max_features);
    std::cerr << "tfidf vocabulary: " << tfidf.dimension() << " n-grams\n";

    std::vector<SparseVector> x;
    std::vector<int> y;
    for (const auto& doc : train.documents) {
        x.push_back(tfidf_transform(tfidf, doc.text));
        y.push_back(*doc.label);
    }
    SvmConfig cfg;
    cfg.C = c;
    cfg.max_iter = max_iter;
    cfg.tol = tol;
    SvmFitTrace trace;
    SvmModel svm = svm_fit(x, y, cfg, &trace);
    std::cerr << "svm converged after " << trace.iterations << " iterations\n";

    std::vector<int> pred;
    for (const auto& xi : x) pred.push_back(svm_predict(svm, xi));
    MetricsReport train_metrics = metrics(confusion(pred, y));
    std::cout << render_table({{"tfidf-svm (train)", train_metrics}});

    auto out = open_output(model_out);
    out << "mgtd-svm-pipeline v1\n";
    tfidf_save(tfidf, out);
    svm_save(svm, out);
    return 0;
}

int cmd_train_scorer(const std::string& train_csv,
                     const std::vector<std::string>& vocab_csvs,
                     const std::string& scorer_out, const std::string& name,
                     std::size_t context_len, double smoothing) {
    // The tokenizer is built from the --vocab files in the order given, so
    // scorers meant for one ensemble get identical tokenizers by passing
    // the same --vocab list.
    auto tokenizer = std::make_shared<Tokenizer>();
    std::vector<std::string> vocab_sources =
        vocab_csvs.empty() ? std::vector<std::string>{train_csv} : vocab_csvs;
    for (const auto& path : vocab_sources) {
        Dataset ds = load_csv(path, /*expect_labels=*/false);
        for (const auto& doc : ds.documents) tokenizer->build_from_text(doc.text);
    }

    Dataset train = load_csv(train_csv, /*expect_labels=*/false);
    std::vector<std::vector<int>> sequences;
    for (const auto& doc : train.documents)
        sequences.push_back(tokenizer->encode(doc.text));

    NgramLmConfig cfg;
    cfg.context_len = context_len;
    cfg.smoothing_alpha = smoothing;
    NgramScorer scorer(name, tokenizer, cfg);
    scorer.fit(sequences);
    std::cerr << "fitted scorer '" << name << "' (vocab "
              << tokenizer->vocab_size() << ", context " << context_len << ")\n";

    auto out = open_output(scorer_out);
    scorer.save(out);
    return 0;
}

int cmd_extract_features(const std::string& input_csv,
                         const std::vector<std::string>& scorer_paths,
                         const std::string& features_out) {
    std::vector<NgramScorer> scorers;
    for (const auto& path : scorer_paths) {
        auto in = open_input(resolve_model_path(path));
        scorers.push_back(NgramScorer::load(in));
    }
    std::vector<const CausalScorer*> ptrs;
    for (const auto& s : scorers) ptrs.push_back(&s);

    Dataset input = load_csv(input_csv, /*expect_labels=*/false);
    auto out = open_output(features_out);
    for (const auto& doc : input.documents)
        write_features(out, doc.id, ensemble_extract(ptrs, doc.text));
    std::cerr << "extracted features for " << input.documents.size()
              << " documents (" << 3 * scorers.size() << " columns/token)\n";
    return 0;
}

int cmd_train_candace(const std::string& features_train,
                      const std::string& features_dev,
                      const std::string& labels_train,
                      const std::string& labels_dev,
                      const std::string& model_out, CandaceConfig cfg) {
    auto train_records = read_features_file(features_train);
    auto dev_records = read_features_file(features_dev);
    if (train_records.empty() || dev_records.empty())
        throw UsageError("empty feature file");
    cfg.input_dim = train_records[0].matrix.columns();

    std::vector<FeatureMatrix> train_x, dev_x;
    std::vector<int> train_y, dev_y;
    join_labels(train_records, load_label_map(labels_train), features_train,
                train_x, train_y);
    join_labels(dev_records, load_label_map(labels_dev), features_dev, dev_x,
                dev_y);

    CandaceTrainResult result =
        candace_train(train_x, train_y, dev_x, dev_y, cfg, &std::cout);
    std::cout << "best_epoch=" << result.best_epoch << " dev_accuracy="
              << result.history[result.best_epoch - 1].dev_accuracy << "\n";

    auto out = open_output(model_out);
    candace_save(result.model, out);
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& input_path,
                const std::string& predictions_out) {
    std::string resolved = resolve_model_path(model_path);
    std::string tag = read_tag(resolved);
    std::vector<std::string> ids;
    std::vector<int> labels;
    if (tag == "mgtd-svm-pipeline v1") {
        auto in = open_input(resolved);
        std::string header;
        std::getline(in, header);
        TfidfModel tfidf = tfidf_load(in);
        SvmModel svm = svm_load(in);
        Dataset input = load_csv(input_path, /*expect_labels=*/false);
        for (const auto& doc : input.documents) {
            ids.push_back(doc.id);
            labels.push_back(svm_predict(svm, tfidf_transform(tfidf, doc.text)));
        }
    } else if (tag == "mgtd-candace v1") {
        auto in = open_input(resolved);
        CandaceModel model = candace_load(in);
        for (const auto& rec : read_features_file(input_path)) {
            ids.push_back(rec.id);
            labels.push_back(candace_predict(model, rec.matrix));
        }
    } else {
        throw ParseError(resolved + ": unrecognized model file (tag '" + tag +
                         "')");
    }
    write_predictions(predictions_out, ids, labels);
    std::cerr << "wrote " << ids.size() << " predictions\n";
    return 0;
}

int cmd_evaluate(const std::string& pred_csv, const std::string& gold_csv,
                 const std::string& system_name) {
    auto pred_map = load_label_map(pred_csv);
    auto gold_map = load_label_map(gold_csv);
    if (pred_map.size() != gold_map.size())
        throw ValueError("prediction/gold id sets differ in size");
    std::vector<int> pred, gold;
    for (const auto& [id, gold_label] : gold_map) {
        auto it = pred_map.find(id);
        if (it == pred_map.end())
            throw ValueError("no prediction for gold id '" + id + "'");
        pred.push_back(it->second);
        gold.push_back(gold_label);
    }
    MetricsReport r = metrics(confusion(pred, gold));
    std::cout << render_table({{system_name, r}});
    // machine-readable record
    std::cout << "system=" << system_name << " accuracy=" << r.accuracy
              << " precision=" << r.precision << " recall=" << r.recall
              << " f1=" << r.f1 << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::setlocale(LC_CTYPE, "C.UTF-8");
    CLI::App app{"machine-generated text detection toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 42;
    app.add_option("--seed", seed, "global RNG seed")->capture_default_str();

    // train-svm
    std::string train_csv, model_out;
    double svm_c = 0.5, svm_tol = 1e-6;
    std::size_t max_features = 5000, max_iter = 5000;
    auto* train_svm = app.add_subcommand("train-svm",
                                         "fit TF-IDF + linear SVM pipeline");
    train_svm->add_option("--train", train_csv, "labeled training CSV")
        ->required()->check(CLI::ExistingFile);
    train_svm->add_option("--model-out", model_out, "output model path")
        ->required();
    train_svm->add_option("--C", svm_c, "regularization parameter")
        ->capture_default_str();
    train_svm->add_option("--max-features", max_features, "TF-IDF feature cap")
        ->capture_default_str();
    train_svm->add_option("--max-iter", max_iter, "solver iteration cap")
        ->capture_default_str();
    train_svm->add_option("--tol", svm_tol, "relative objective tolerance")
        ->capture_default_str();

    // train-scorer
    std::string scorer_train, scorer_out, scorer_name = "ngram";
    std::vector<std::string> vocab_csvs;
    std::size_t context_len = 3;
    double smoothing = 1.0;
    auto* train_scorer =
        app.add_subcommand("train-scorer", "fit an n-gram causal scorer");
    train_scorer->add_option("--train", scorer_train, "training text CSV")
        ->required()->check(CLI::ExistingFile);
    train_scorer->add_option("--scorer-out", scorer_out, "output scorer path")
        ->required();
    train_scorer->add_option("--name", scorer_name, "scorer identifier")
        ->capture_default_str();
    train_scorer
        ->add_option("--vocab", vocab_csvs,
                     "CSV(s) defining the tokenizer vocabulary; pass the same "
                     "list to every scorer of an ensemble (default: --train)")
        ->check(CLI::ExistingFile);
    train_scorer->add_option("--context-len", context_len, "conditioning tokens")
        ->capture_default_str();
    train_scorer->add_option("--smoothing", smoothing, "add-alpha smoothing")
        ->capture_default_str();

    // extract-features
    std::string extract_input, features_out;
    std::vector<std::string> scorer_paths;
    auto* extract = app.add_subcommand(
        "extract-features", "score documents with a scorer ensemble");
    extract->add_option("--input", extract_input, "input CSV")
        ->required()->check(CLI::ExistingFile);
    extract->add_option("--scorer", scorer_paths, "scorer file(s), in order")
        ->required();
    extract->add_option("--output", features_out, "output feature file")
        ->required();

    // train-candace
    std::string feat_train, feat_dev, lab_train, lab_dev, candace_out;
    CandaceConfig ccfg;
    auto* train_cand = app.add_subcommand(
        "train-candace", "train the sequence classifier on token features");
    train_cand->add_option("--features-train", feat_train, "training features")
        ->required()->check(CLI::ExistingFile);
    train_cand->add_option("--features-dev", feat_dev, "dev features")
        ->required()->check(CLI::ExistingFile);
    train_cand->add_option("--labels-train", lab_train, "training labels CSV")
        ->required()->check(CLI::ExistingFile);
    train_cand->add_option("--labels-dev", lab_dev, "dev labels CSV")
        ->required()->check(CLI::ExistingFile);
    train_cand->add_option("--model-out", candace_out, "output model path")
        ->required();
    train_cand->add_option("--epochs", ccfg.epochs)->capture_default_str();
    train_cand->add_option("--lr", ccfg.lr)->capture_default_str();
    train_cand->add_option("--batch", ccfg.batch_size)->capture_default_str();
    train_cand->add_option("--d-model", ccfg.d_model)->capture_default_str();
    train_cand->add_option("--heads", ccfg.n_heads)->capture_default_str();
    train_cand->add_option("--layers", ccfg.n_layers)->capture_default_str();
    train_cand->add_option("--ffn", ccfg.ffn_dim)->capture_default_str();
    train_cand->add_option("--dropout", ccfg.dropout)->capture_default_str();
    train_cand->add_option("--weight-decay", ccfg.weight_decay)
        ->capture_default_str();

    // predict
    std::string pred_model, pred_input, pred_out;
    auto* predict = app.add_subcommand(
        "predict", "predict labels (model type auto-detected)");
    predict->add_option("--model", pred_model, "model file")->required();
    predict->add_option("--input", pred_input,
                        "input CSV (svm) or feature file (candace)")
        ->required()->check(CLI::ExistingFile);
    predict->add_option("--output", pred_out, "predictions CSV")->required();

    // evaluate
    std::string eval_pred, eval_gold, eval_name = "system";
    auto* evaluate =
        app.add_subcommand("evaluate", "score predictions against gold labels");
    evaluate->add_option("--pred", eval_pred, "predictions CSV")
        ->required()->check(CLI::ExistingFile);
    evaluate->add_option("--gold", eval_gold, "gold labels CSV")
        ->required()->check(CLI::ExistingFile);
    evaluate->add_option("--name", eval_name, "system name for the table")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_svm->parsed())
            return cmd_train_svm(train_csv, model_out, svm_c, max_features,
                                 max_iter, svm_tol);
        if (train_scorer->parsed())
            return cmd_train_scorer(scorer_train, vocab_csvs, scorer_out,
                                    scorer_name, context_len, smoothing);
        if (extract->parsed())
            return cmd_extract_features(extract_input, scorer_paths,
                                        features_out);
        if (train_cand->parsed()) {
            ccfg.seed = seed;
            return cmd_train_candace(feat_train, feat_dev, lab_train, lab_dev,
                                     candace_out, ccfg);
        }
        if (predict->parsed())
            return cmd_predict(pred_model, pred_input, pred_out);
        if (evaluate->parsed())
            return cmd_evaluate(eval_pred, eval_gold, eval_name);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
