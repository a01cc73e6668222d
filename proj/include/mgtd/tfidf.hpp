#pragma once

// TF-IDF over word n-grams: smoothed IDF ln((1+N)/(1+df))+1, raw term
// frequency, L2 row normalization. Vocabulary capped at max_features by
// corpus-wide raw count, ties broken lexicographically.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/serial.hpp"
#include "mgtd/text.hpp"

namespace mgtd {

struct SparseVector {
    std::vector<std::pair<std::size_t, double>> entries;  // sorted by index
    std::size_t dimension = 0;

    double l2_norm() const {
        double s = 0.0;
        for (auto& [i, v] : entries) s += v * v;
        return std::sqrt(s);
    }
    double dot(const std::vector<double>& dense) const {
        double s = 0.0;
        for (auto& [i, v] : entries) s += v * dense[i];
        return s;
    }
};

struct TfidfModel {
    std::size_t min_n = 2, max_n = 3;
    std::size_t total_documents = 0;
    std::unordered_map<std::string, std::size_t> term_to_index;
    std::vector<std::string> terms;  // index -> term, lexicographic order
    std::vector<double> idf;         // index -> weight

    std::size_t dimension() const { return terms.size(); }
};

inline double smoothed_idf(std::size_t total_documents, std::size_t df) {
    return std::log((1.0 + static_cast<double>(total_documents)) /
                    (1.0 + static_cast<double>(df))) + 1.0;
}

inline TfidfModel tfidf_fit(const Dataset& corpus,
                            std::size_t max_features = 5000,
                            std::size_t min_n = 2, std::size_t max_n = 3) {
    if (corpus.documents.empty())
        throw UsageError("tfidf_fit: empty corpus");

    // std::map keeps terms in lexicographic order, which both the
    // tie-break and the index assignment rely on.
    std::map<std::string, std::pair<std::size_t, std::size_t>> stats;  // term -> (count, df)
    for (const auto& doc : corpus.documents) {
        auto grams = extract_ngrams(tokenize_words(doc.text), min_n, max_n);
        std::sort(grams.begin(), grams.end());
        for (std::size_t i = 0; i < grams.size(); ++i) {
            auto& [count, df] = stats[grams[i]];
            ++count;
            if (i == 0 || grams[i] != grams[i - 1]) ++df;
        }
    }

    TfidfModel model;
    model.min_n = min_n;
    model.max_n = max_n;
    model.total_documents = corpus.documents.size();

    if (stats.size() > max_features) {
        // Keep the max_features highest-count terms; on equal counts the
        // lexicographically smaller term wins. stable_sort over the
        // already-lexicographic map order gives exactly that.
        std::vector<const std::pair<const std::string,
                                    std::pair<std::size_t, std::size_t>>*> by_count;
        by_count.reserve(stats.size());
        for (const auto& kv : stats) by_count.push_back(&kv);
        std::stable_sort(by_count.begin(), by_count.end(),
                         [](auto* a, auto* b) {
                             return a->second.first > b->second.first;
                         });
        by_count.resize(max_features);
        std::map<std::string, std::pair<std::size_t, std::size_t>> kept;
        for (auto* kv : by_count) kept.insert(*kv);
        stats = std::move(kept);
    }

    for (auto& [term, cd] : stats) {
        model.term_to_index.emplace(term, model.terms.size());
        model.terms.push_back(term);
        model.idf.push_back(smoothed_idf(model.total_documents, cd.second));
    }
    return model;
}

inline SparseVector tfidf_transform(const TfidfModel& model,
                                    const std::string& text) {
    std::unordered_map<std::size_t, double> counts;
    for (auto& gram :
         extract_ngrams(tokenize_words(text), model.min_n, model.max_n)) {
        auto it = model.term_to_index.find(gram);
        if (it != model.term_to_index.end()) counts[it->second] += 1.0;
    }
    SparseVector vec;
    vec.dimension = model.dimension();
    vec.entries.reserve(counts.size());
    for (auto& [idx, count] : counts)
        vec.entries.emplace_back(idx, count * model.idf[idx]);
    std::sort(vec.entries.begin(), vec.entries.end());
    double norm = vec.l2_norm();
    if (norm > 0.0)
        for (auto& [idx, v] : vec.entries) v /= norm;
    return vec;
}

// Persistence: version tag, ngram range, N, then (term, index, idf) records
// sorted by index. Terms are written length-prefixed so any byte content
// round-trips.
inline void tfidf_save(const TfidfModel& model, std::ostream& out) {
    out << "mgtd-tfidf v1\n";
    out << model.min_n << ' ' << model.max_n << ' ' << model.total_documents
        << ' ' << model.terms.size() << '\n';
    for (std::size_t i = 0; i < model.terms.size(); ++i) {
        out << model.terms[i].size() << ':' << model.terms[i] << ' ' << i
            << ' ' << double_to_string(model.idf[i]) << '\n';
    }
}

inline TfidfModel tfidf_load(std::istream& in) {
    std::string tag;
    std::getline(in, tag);
    if (tag != "mgtd-tfidf v1")
        throw ParseError("not a tfidf model file (tag '" + tag + "')");
    TfidfModel model;
    std::size_t n_terms = 0;
    in >> model.min_n >> model.max_n >> model.total_documents >> n_terms;
    for (std::size_t i = 0; i < n_terms; ++i) {
        std::size_t len = 0;
        char colon = 0;
        in >> len >> colon;
        if (colon != ':') throw ParseError("tfidf model: bad term record");
        std::string term(len, '\0');
        in.read(term.data(), static_cast<std::streamsize>(len));
        std::size_t idx = 0;
        std::string idf_str;
        in >> idx >> idf_str;
        if (!in || idx != i) throw ParseError("tfidf model: bad index order");
        model.term_to_index.emplace(term, i);
        model.terms.push_back(std::move(term));
        model.idf.push_back(parse_double(idf_str));
    }
    in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
    return model;
}

}  // namespace mgtd
