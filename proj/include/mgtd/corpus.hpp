#pragma once

// Labeled/unlabeled document datasets in the shared-task CSV schema
// (id,text,label). Labels are the strings "human"/"machine", encoded as
// 0/1 internally.

#include <algorithm>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mgtd/csv.hpp"
#include "mgtd/error.hpp"

namespace mgtd {

struct LabeledDocument {
    std::string id;
    std::string text;
    std::optional<int> label;  // 0 = human, 1 = machine
};

struct Dataset {
    std::vector<LabeledDocument> documents;
    bool labeled = false;
};

inline int encode_label(const std::string& s, std::size_t row) {
    if (s == "human") return 0;
    if (s == "machine") return 1;
    throw ValueError("row " + std::to_string(row) + ": label '" + s +
                     "' is not 'human' or 'machine'");
}

inline std::string decode_label(int label) {
    if (label == 0) return "human";
    if (label == 1) return "machine";
    throw ValueError("label " + std::to_string(label) + " is not 0 or 1");
}

// Columns are located by header name; any column order is accepted and
// unknown extras are ignored with a warning.
inline Dataset load_csv(const std::string& path, bool expect_labels,
                        std::ostream& warn = std::cerr) {
    auto rows = csv::read_file(path);
    if (rows.empty()) throw SchemaError(path + ": missing header row");
    const csv::Row& header = rows.front();

    auto find_col = [&](const std::string& name) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };
    std::ptrdiff_t id_col = find_col("id");
    std::ptrdiff_t text_col = find_col("text");
    std::ptrdiff_t label_col = find_col("label");
    if (id_col < 0) throw SchemaError(path + ": missing column 'id'");
    if (text_col < 0) throw SchemaError(path + ": missing column 'text'");
    if (expect_labels && label_col < 0)
        throw SchemaError(path + ": missing column 'label'");

    for (const auto& name : header) {
        if (name != "id" && name != "text" && name != "label")
            warn << "warning: " << path << ": ignoring extra column '" << name
                 << "'\n";
    }

    Dataset ds;
    ds.labeled = expect_labels;
    std::unordered_set<std::string> seen_ids;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const csv::Row& row = rows[r];
        auto field = [&](std::ptrdiff_t col) -> const std::string& {
            if (col >= static_cast<std::ptrdiff_t>(row.size()))
                throw ParseError(path + ": row " + std::to_string(r) +
                                 " has too few fields");
            return row[static_cast<std::size_t>(col)];
        };
        LabeledDocument doc;
        doc.id = field(id_col);
        doc.text = field(text_col);
        if (doc.id.empty())
            throw ValueError(path + ": row " + std::to_string(r) + ": empty id");
        if (!seen_ids.insert(doc.id).second)
            throw DuplicateError(path + ": row " + std::to_string(r) +
                                 ": duplicate id '" + doc.id + "'");
        if (expect_labels) doc.label = encode_label(field(label_col), r);
        ds.documents.push_back(std::move(doc));
    }
    return ds;
}

inline void write_csv(const std::string& path, const Dataset& ds) {
    std::vector<csv::Row> rows;
    rows.push_back(ds.labeled ? csv::Row{"id", "text", "label"}
                              : csv::Row{"id", "text"});
    for (const auto& doc : ds.documents) {
        csv::Row row{doc.id, doc.text};
        if (ds.labeled) row.push_back(decode_label(*doc.label));
        rows.push_back(std::move(row));
    }
    csv::write_file(path, rows);
}

// Predictions file: id + decoded string label, one row per document.
inline void write_predictions(const std::string& path,
                              const std::vector<std::string>& ids,
                              const std::vector<int>& labels) {
    if (ids.size() != labels.size())
        throw ShapeError("ids/labels length mismatch");
    std::vector<csv::Row> rows;
    rows.push_back({"id", "label"});
    for (std::size_t i = 0; i < ids.size(); ++i)
        rows.push_back({ids[i], decode_label(labels[i])});
    csv::write_file(path, rows);
}

inline std::pair<std::size_t, std::size_t> class_counts(const Dataset& ds) {
    if (!ds.labeled || ds.documents.empty())
        throw UsageError("class_counts requires a nonempty labeled dataset");
    std::size_t count0 = 0, count1 = 0;
    for (const auto& doc : ds.documents) (*doc.label == 0 ? count0 : count1)++;
    return {count0, count1};
}

}  // namespace mgtd
