#pragma once

// Causal-scorer contract and an add-alpha smoothed n-gram language model
// with suffix backoff. The n-gram model stands in for large causal LMs: it
// exposes a full normalized next-token log-probability distribution for any
// prefix, which is all the feature extraction needs.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mgtd/error.hpp"
#include "mgtd/serial.hpp"

namespace mgtd {

inline constexpr int kBosId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::size_t kMaxSeqLen = 256;

// Word-level tokenizer with a fixed vocabulary. Ids 0 and 1 are reserved
// for BOS and UNK; out-of-vocabulary words map to UNK.
class Tokenizer {
   public:
    Tokenizer() {
        id_to_token_ = {"<s>", "<unk>"};
        token_to_id_ = {{"<s>", kBosId}, {"<unk>", kUnkId}};
    }

    // Maximal runs of alphanumeric characters, lowercased; punctuation and
    // whitespace separate words.
    static std::vector<std::string> split_words(std::string_view text) {
        std::vector<std::string> words;
        std::string current;
        for (char c : text) {
            unsigned char uc = static_cast<unsigned char>(c);
            if (std::isalnum(uc)) {
                current += static_cast<char>(std::tolower(uc));
            } else if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
        }
        if (!current.empty()) words.push_back(std::move(current));
        return words;
    }

    int add_token(const std::string& word) {
        auto it = token_to_id_.find(word);
        if (it != token_to_id_.end()) return it->second;
        int id = static_cast<int>(id_to_token_.size());
        id_to_token_.push_back(word);
        token_to_id_.emplace(word, id);
        return id;
    }

    void build_from_text(std::string_view text) {
        for (auto& w : split_words(text)) add_token(w);
    }

    std::vector<int> encode(std::string_view text) const {
        std::vector<int> ids;
        for (auto& w : split_words(text)) {
            auto it = token_to_id_.find(w);
            ids.push_back(it == token_to_id_.end() ? kUnkId : it->second);
        }
        return ids;
    }

    // Reserved ids render as empty and are dropped from the joined text.
    std::string decode(std::span<const int> ids) const {
        std::string out;
        for (int id : ids) {
            if (id == kBosId || id == kUnkId) continue;
            if (!out.empty()) out += ' ';
            out += id_to_token_.at(static_cast<std::size_t>(id));
        }
        return out;
    }

    std::size_t vocab_size() const { return id_to_token_.size(); }
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    friend bool operator==(const Tokenizer& a, const Tokenizer& b) {
        return a.id_to_token_ == b.id_to_token_;
    }

   private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

struct NextTokenDistribution {
    std::vector<double> log_probs;
};

class CausalScorer {
   public:
    virtual ~CausalScorer() = default;
    virtual const std::string& name() const = 0;
    virtual const Tokenizer& tokenizer() const = 0;
    // Normalized log-probability distribution over the vocabulary for the
    // token following `prefix` (prefix excludes BOS; BOS conditioning is
    // the scorer's concern).
    virtual NextTokenDistribution next_distribution(
        std::span<const int> prefix) const = 0;
};

struct NgramLmConfig {
    std::size_t context_len = 3;   // number of conditioning tokens
    double smoothing_alpha = 1.0;  // add-alpha; > 0 keeps full support
};

class NgramScorer final : public CausalScorer {
   public:
    NgramScorer(std::string name, std::shared_ptr<const Tokenizer> tokenizer,
                NgramLmConfig cfg)
        : name_(std::move(name)), tokenizer_(std::move(tokenizer)), cfg_(cfg) {
        if (cfg_.smoothing_alpha <= 0.0)
            throw ConfigError("ngram lm: smoothing_alpha must be > 0");
        tables_.resize(cfg_.context_len + 1);
    }

    const std::string& name() const override { return name_; }
    const Tokenizer& tokenizer() const override { return *tokenizer_; }
    const NgramLmConfig& config() const { return cfg_; }
    std::shared_ptr<const Tokenizer> tokenizer_ptr() const { return tokenizer_; }

    // Accumulates context->token counts for every context length
    // 0..context_len. Each sequence is scored left to right with BOS
    // prepended, mirroring how distributions are later queried.
    void fit(const std::vector<std::vector<int>>& corpus) {
        if (corpus.empty()) throw UsageError("ngram lm: empty training corpus");
        for (const auto& seq : corpus) {
            std::vector<int> padded;
            padded.reserve(seq.size() + 1);
            padded.push_back(kBosId);
            padded.insert(padded.end(), seq.begin(), seq.end());
            for (std::size_t t = 1; t < padded.size(); ++t) {
                int next = padded[t];
                for (std::size_t k = 0; k <= cfg_.context_len; ++k) {
                    if (k > t) break;
                    auto& ctx = tables_[k][context_key(
                        std::span<const int>(padded.data() + t - k, k))];
                    ctx.total += 1;
                    ctx.counts[next] += 1;
                }
            }
        }
        fitted_ = true;
    }

    // P(t|ctx) = (count(ctx,t) + a) / (count(ctx,.) + a|V|), falling back to
    // the longest suffix context that was observed in training (the empty
    // context is always available).
    NextTokenDistribution next_distribution(
        std::span<const int> prefix) const override {
        if (!fitted_) throw UsageError("ngram lm: scorer is not fitted");
        std::size_t k = std::min(cfg_.context_len, prefix.size());
        const ContextCounts* ctx = nullptr;
        static const ContextCounts kEmptyCounts{};
        for (;; --k) {
            auto suffix =
                std::span<const int>(prefix.data() + prefix.size() - k, k);
            auto it = tables_[k].find(context_key(suffix));
            if (it != tables_[k].end()) {
                ctx = &it->second;
                break;
            }
            if (k == 0) {
                ctx = &kEmptyCounts;  // empty corpus text: uniform smoothing
                break;
            }
        }
        std::size_t vocab = tokenizer_->vocab_size();
        double alpha = cfg_.smoothing_alpha;
        double denom = std::log(static_cast<double>(ctx->total) +
                                alpha * static_cast<double>(vocab));
        NextTokenDistribution d;
        d.log_probs.assign(vocab, std::log(alpha) - denom);
        for (auto& [token, count] : ctx->counts)
            d.log_probs[static_cast<std::size_t>(token)] =
                std::log(static_cast<double>(count) + alpha) - denom;
        return d;
    }

    // Deterministic argmax decoding; ties go to the smallest token id.
    std::vector<int> greedy_decode(std::size_t length) const {
        std::vector<int> out;
        out.reserve(length);
        for (std::size_t t = 0; t < length; ++t) {
            auto d = next_distribution(out);
            out.push_back(static_cast<int>(
                std::max_element(d.log_probs.begin(), d.log_probs.end()) -
                d.log_probs.begin()));
        }
        return out;
    }

    // Temperature-1 ancestral sampling with the caller's generator.
    std::vector<int> sample(std::size_t length, std::mt19937_64& rng) const {
        std::vector<int> out;
        out.reserve(length);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t t = 0; t < length; ++t) {
            auto d = next_distribution(out);
            double u = unit(rng), cum = 0.0;
            int picked = static_cast<int>(d.log_probs.size()) - 1;
            for (std::size_t i = 0; i < d.log_probs.size(); ++i) {
                cum += std::exp(d.log_probs[i]);
                if (u < cum) {
                    picked = static_cast<int>(i);
                    break;
                }
            }
            out.push_back(picked);
        }
        return out;
    }

    void save(std::ostream& out) const {
        out << "mgtd-ngram v1\n";
        out << name_.size() << ':' << name_ << '\n';
        out << cfg_.context_len << ' ' << double_to_string(cfg_.smoothing_alpha)
            << '\n';
        out << tokenizer_->vocab_size() << '\n';
        for (const auto& tok : tokenizer_->tokens())
            out << tok.size() << ':' << tok << '\n';
        for (std::size_t k = 0; k < tables_.size(); ++k) {
            out << k << ' ' << tables_[k].size() << '\n';
            for (const auto& [key, ctx] : tables_[k]) {
                auto ids = decode_key(key);
                for (int id : ids) out << id << ' ';
                out << "| " << ctx.total << ' ' << ctx.counts.size();
                for (auto& [token, count] : ctx.counts)
                    out << ' ' << token << ' ' << count;
                out << '\n';
            }
        }
    }

    static NgramScorer load(std::istream& in) {
        std::string tag;
        std::getline(in, tag);
        if (tag != "mgtd-ngram v1")
            throw ParseError("not an ngram scorer file (tag '" + tag + "')");
        auto read_prefixed = [&in]() {
            std::size_t len = 0;
            char colon = 0;
            in >> len >> colon;
            if (colon != ':') throw ParseError("ngram scorer: bad string record");
            std::string s(len, '\0');
            in.read(s.data(), static_cast<std::streamsize>(len));
            return s;
        };
        std::string name = read_prefixed();
        NgramLmConfig cfg;
        std::string alpha_str;
        in >> cfg.context_len >> alpha_str;
        cfg.smoothing_alpha = parse_double(alpha_str);
        std::size_t vocab = 0;
        in >> vocab;
        auto tokenizer = std::make_shared<Tokenizer>();
        for (std::size_t i = 0; i < vocab; ++i) {
            std::string tok = read_prefixed();
            if (i < 2) continue;  // reserved ids are fixed
            tokenizer->add_token(tok);
        }
        NgramScorer scorer(std::move(name), tokenizer, cfg);
        for (std::size_t k = 0; k <= cfg.context_len; ++k) {
            std::size_t k_read = 0, n_contexts = 0;
            in >> k_read >> n_contexts;
            if (!in || k_read != k)
                throw ParseError("ngram scorer: bad context table header");
            for (std::size_t c = 0; c < n_contexts; ++c) {
                std::vector<int> ctx_ids(k);
                for (std::size_t j = 0; j < k; ++j) in >> ctx_ids[j];
                std::string bar;
                in >> bar;
                if (bar != "|") throw ParseError("ngram scorer: bad context record");
                ContextCounts ctx;
                std::size_t n_tokens = 0;
                in >> ctx.total >> n_tokens;
                for (std::size_t j = 0; j < n_tokens; ++j) {
                    int token = 0;
                    std::uint64_t count = 0;
                    in >> token >> count;
                    ctx.counts[token] = count;
                }
                if (!in) throw ParseError("ngram scorer: truncated counts");
                scorer.tables_[k][context_key(ctx_ids)] = std::move(ctx);
            }
        }
        scorer.fitted_ = true;
        return scorer;
    }

   private:
    struct ContextCounts {
        std::uint64_t total = 0;
        std::unordered_map<int, std::uint64_t> counts;
    };

    static std::string context_key(std::span<const int> ids) {
        std::string key(ids.size() * sizeof(int), '\0');
        if (!ids.empty()) std::memcpy(key.data(), ids.data(), key.size());
        return key;
    }

    static std::vector<int> decode_key(const std::string& key) {
        std::vector<int> ids(key.size() / sizeof(int));
        if (!ids.empty()) std::memcpy(ids.data(), key.data(), key.size());
        return ids;
    }

    std::string name_;
    std::shared_ptr<const Tokenizer> tokenizer_;
    NgramLmConfig cfg_;
    std::vector<std::unordered_map<std::string, ContextCounts>> tables_;
    bool fitted_ = false;
};

}  // namespace mgtd
