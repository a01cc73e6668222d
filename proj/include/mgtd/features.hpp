#pragma once

// Per-token probabilistic features from causal scorers:
//   alpha = max log-probability over the vocabulary at a position
//   beta  = entropy (nats) of the next-token distribution
//   gamma = log-probability of the token actually observed
// Features from M scorers are concatenated token-wise into 3M columns.
// The feature file is newline-delimited JSON, one document per line.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgtd/error.hpp"
#include "mgtd/ngram_lm.hpp"

namespace mgtd {

struct TokenFeatureVector {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
};

struct FeatureMatrix {
    std::vector<std::string> scorer_ids;
    std::vector<std::vector<double>> rows;  // one row per token, 3M columns

    std::size_t columns() const { return 3 * scorer_ids.size(); }
};

// -sum p ln p in nats, with p ln p := 0 at p = 0. Rejects distributions
// whose probabilities do not sum to 1 within 1e-9.
inline double entropy(const NextTokenDistribution& d) {
    double total = 0.0, h = 0.0;
    for (double lp : d.log_probs) {
        double p = std::exp(lp);
        total += p;
        if (p > 0.0) h -= p * lp;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ValueError("entropy: distribution sums to " +
                         std::to_string(total) + ", not 1");
    return h;
}

inline TokenFeatureVector token_features(const NextTokenDistribution& d,
                                         int observed) {
    if (observed < 0 ||
        static_cast<std::size_t>(observed) >= d.log_probs.size())
        throw ValueError("token_features: observed token id out of range");
    TokenFeatureVector f;
    f.beta = entropy(d);
    f.alpha = *std::max_element(d.log_probs.begin(), d.log_probs.end());
    f.gamma = d.log_probs[static_cast<std::size_t>(observed)];
    return f;
}

// Features for an already-tokenized sequence; position t is scored from the
// distribution conditioned on tokens < t (position 0 from BOS alone).
inline std::vector<TokenFeatureVector> score_tokens(const CausalScorer& scorer,
                                                    std::span<const int> ids) {
    std::size_t len = std::min(ids.size(), kMaxSeqLen);
    std::vector<TokenFeatureVector> out;
    out.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
        auto d = scorer.next_distribution(ids.subspan(0, t));
        out.push_back(token_features(d, ids[t]));
    }
    return out;
}

inline std::vector<TokenFeatureVector> score_document(
    const CausalScorer& scorer, const std::string& text) {
    auto ids = scorer.tokenizer().encode(text);
    return score_tokens(scorer, ids);
}

inline FeatureMatrix ensemble_extract_tokens(
    const std::vector<const CausalScorer*>& scorers, std::span<const int> ids) {
    if (scorers.empty()) throw ConfigError("ensemble_extract: no scorers");
    for (std::size_t i = 1; i < scorers.size(); ++i)
        if (!(scorers[i]->tokenizer() == scorers[0]->tokenizer()))
            throw ConfigError("ensemble_extract: scorers use different tokenizers");

    FeatureMatrix fm;
    for (auto* s : scorers) fm.scorer_ids.push_back(s->name());
    std::size_t len = std::min(ids.size(), kMaxSeqLen);
    fm.rows.assign(len, std::vector<double>());
    for (std::size_t m = 0; m < scorers.size(); ++m) {
        auto feats = score_tokens(*scorers[m], ids);
        for (std::size_t t = 0; t < len; ++t) {
            fm.rows[t].push_back(feats[t].alpha);
            fm.rows[t].push_back(feats[t].beta);
            fm.rows[t].push_back(feats[t].gamma);
        }
    }
    return fm;
}

inline FeatureMatrix ensemble_extract(
    const std::vector<const CausalScorer*>& scorers, const std::string& text) {
    if (scorers.empty()) throw ConfigError("ensemble_extract: no scorers");
    auto ids = scorers[0]->tokenizer().encode(text);
    return ensemble_extract_tokens(scorers, ids);
}

// --- feature file I/O -----------------------------------------------------

inline void write_features(std::ostream& out, const std::string& id,
                           const FeatureMatrix& fm) {
    nlohmann::json rec;
    rec["id"] = id;
    rec["scorers"] = fm.scorer_ids;
    rec["features"] = fm.rows;
    out << rec.dump() << '\n';
}

struct FeatureRecord {
    std::string id;
    FeatureMatrix matrix;
};

// Reads the whole newline-delimited file. Records that violate the
// gamma <= alpha invariant are kept but reported on `warn`.
inline std::vector<FeatureRecord> read_features(std::istream& in,
                                                std::ostream& warn = std::cerr) {
    std::vector<FeatureRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("feature file line " + std::to_string(line_no) +
                             ": " + e.what());
        }
        if (!rec.contains("id") || !rec.contains("scorers") ||
            !rec.contains("features"))
            throw ParseError("feature file line " + std::to_string(line_no) +
                             ": missing id/scorers/features");
        FeatureRecord out;
        out.id = rec["id"].get<std::string>();
        out.matrix.scorer_ids = rec["scorers"].get<std::vector<std::string>>();
        out.matrix.rows =
            rec["features"].get<std::vector<std::vector<double>>>();
        std::size_t want_cols = out.matrix.columns();
        for (const auto& row : out.matrix.rows) {
            if (row.size() % 3 != 0)
                throw ParseError("feature file line " + std::to_string(line_no) +
                                 ": column count not divisible by 3");
            if (row.size() != want_cols)
                throw ParseError("feature file line " + std::to_string(line_no) +
                                 ": expected " + std::to_string(want_cols) +
                                 " columns, got " + std::to_string(row.size()));
            for (std::size_t m = 0; m < out.matrix.scorer_ids.size(); ++m) {
                if (row[3 * m + 2] > row[3 * m]) {
                    warn << "warning: feature file line " << line_no
                         << ": gamma > alpha for scorer "
                         << out.matrix.scorer_ids[m] << "\n";
                }
            }
        }
        records.push_back(std::move(out));
    }
    return records;
}

inline void write_features_file(const std::string& path,
                                const std::vector<FeatureRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    for (const auto& rec : records) write_features(out, rec.id, rec.matrix);
}

inline std::vector<FeatureRecord> read_features_file(
    const std::string& path, std::ostream& warn = std::cerr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    return read_features(in, warn);
}

}  // namespace mgtd
