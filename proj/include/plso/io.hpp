#pragma once

// Text interchange: observation CSVs, full-precision numeric formatting, atomic file
// writes and the fitted-model JSON document.

#include "plso/types.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace plso::io {

using nlohmann::ordered_json;

// Shortest text that round-trips is often fewer digits; %.17g is used everywhere so
// outputs do not depend on the formatter.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::data, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Writes to a sibling temporary, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::usage, "cannot write " + path.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) fail(ErrorKind::usage, "write failed for " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorKind::usage, "cannot move output into place at " + path.string());
    }
}

// One header line `value`, then one number per line.
inline Eigen::VectorXd parse_value_csv(std::string_view text, const std::string& name = "input") {
    std::vector<double> vals;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line != "value")
                fail(ErrorKind::data, name + ":" + std::to_string(line_no) + ": expected header 'value'");
            header_seen = true;
            continue;
        }
        if (line.empty()) {
            if (pos >= text.size()) break;  // trailing newline
            fail(ErrorKind::data, name + ":" + std::to_string(line_no) + ": empty line");
        }
        const std::string tok(line);
        char* stop = nullptr;
        errno = 0;
        const double v = std::strtod(tok.c_str(), &stop);
        if (stop == tok.c_str() || *stop != '\0' || errno == ERANGE || !std::isfinite(v))
            fail(ErrorKind::data, name + ":" + std::to_string(line_no) + ": not a finite number: '" + tok + "'");
        vals.push_back(v);
    }
    if (!header_seen) fail(ErrorKind::data, name + ": empty file");
    if (vals.empty()) fail(ErrorKind::data, name + ": no data rows");
    return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Index>(vals.size()));
}

inline std::string value_csv(const Eigen::VectorXd& v) {
    std::string out = "value\n";
    out.reserve(out.size() + static_cast<std::size_t>(v.size()) * 24);
    for (Index i = 0; i < v.size(); ++i) {
        out += fmt(v(i));
        out += '\n';
    }
    return out;
}

// Generic numeric table with a header row.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(const std::vector<std::string>& cells) { rows_.push_back(cells); }

    std::string str() const {
        std::string out;
        append(out, header_);
        for (const auto& r : rows_) append(out, r);
        return out;
    }
    std::size_t n_rows() const { return rows_.size(); }

private:
    static void append(std::string& out, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    }
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// Fitted model document.

inline constexpr int kSchemaMajor = 1;
inline constexpr int kSchemaMinor = 0;

struct FittedModelFile {
    ModelParams params;
    LogVarianceField psi;
    std::vector<double> objective_trace;
    std::vector<std::string> warnings;
    std::string input_digest;   // FNV-1a of the input file bytes, hex
    std::uint64_t seed = 0;
    ordered_json config = ordered_json::object();
    ordered_json selection = ordered_json::object();
};

// Doubles travel as %.17g strings inside JSON so the document round-trips byte-for-byte
// regardless of the JSON library's float formatter.
inline ordered_json num(double v) { return fmt(v); }

inline double parse_num(const ordered_json& j, const std::string& what) {
    if (j.is_number()) return j.get<double>();
    if (!j.is_string()) fail(ErrorKind::data, "model file: " + what + " is not a number");
    const std::string s = j.get<std::string>();
    char* stop = nullptr;
    const double v = std::strtod(s.c_str(), &stop);
    if (stop == s.c_str() || *stop != '\0') fail(ErrorKind::data, "model file: bad number for " + what);
    return v;
}

inline ordered_json lambda_json(const Lambda& l) {
    ordered_json j = ordered_json::object();
    j["stationary"] = l.is_stationary();
    j["value"] = l.is_stationary() ? ordered_json(nullptr) : num(l.value());
    return j;
}

inline Lambda lambda_from_json(const ordered_json& j) {
    if (j.at("stationary").get<bool>()) return Lambda::stationary();
    return Lambda(parse_num(j.at("value"), "lambda"));
}

inline ordered_json to_json(const FittedModelFile& f) {
    ordered_json doc = ordered_json::object();
    doc["schema_version"] = std::to_string(kSchemaMajor) + "." + std::to_string(kSchemaMinor);
    ordered_json p = ordered_json::object();
    p["delta"] = num(f.params.delta);
    p["lambda"] = lambda_json(f.params.lambda);
    p["obs_noise_var"] = num(f.params.obs_noise_var);
    p["lengthscale_max"] = num(f.params.lengthscale_max);
    ordered_json ls = ordered_json::array(), ws = ordered_json::array();
    for (double l : f.params.lengthscales) ls.push_back(num(l));
    for (double w : f.params.center_freqs) ws.push_back(num(w));
    p["lengthscales"] = ls;
    p["center_freqs"] = ws;
    doc["params"] = p;

    ordered_json psi = ordered_json::object();
    psi["window_len"] = f.psi.window_len;
    psi["n_windows"] = f.psi.n_windows();
    ordered_json rows = ordered_json::array();
    for (Index j = 0; j < f.psi.n_components(); ++j) {
        ordered_json row = ordered_json::array();
        for (Index m = 0; m < f.psi.n_windows(); ++m) row.push_back(num(f.psi.values(j, m)));
        rows.push_back(row);
    }
    psi["values"] = rows;
    doc["psi"] = psi;

    ordered_json diag = ordered_json::object();
    ordered_json tr = ordered_json::array();
    for (double h : f.objective_trace) tr.push_back(num(h));
    diag["objective_trace"] = tr;
    diag["warnings"] = f.warnings;
    diag["selection"] = f.selection;
    doc["diagnostics"] = diag;

    ordered_json prov = ordered_json::object();
    prov["input_digest"] = f.input_digest;
    prov["seed"] = f.seed;
    prov["config"] = f.config;
    doc["provenance"] = prov;
    return doc;
}

inline std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

inline FittedModelFile from_json(const ordered_json& doc) {
    try {
        const std::string ver = doc.at("schema_version").get<std::string>();
        const int major = std::atoi(ver.substr(0, ver.find('.')).c_str());
        if (major != kSchemaMajor)
            fail(ErrorKind::data, "model file schema version " + ver + " is not supported (expected " +
                                      std::to_string(kSchemaMajor) + ".x)");
        FittedModelFile f;
        const auto& p = doc.at("params");
        f.params.delta = parse_num(p.at("delta"), "delta");
        f.params.lambda = lambda_from_json(p.at("lambda"));
        f.params.obs_noise_var = parse_num(p.at("obs_noise_var"), "obs_noise_var");
        f.params.lengthscale_max = parse_num(p.at("lengthscale_max"), "lengthscale_max");
        for (const auto& v : p.at("lengthscales")) f.params.lengthscales.push_back(parse_num(v, "lengthscale"));
        for (const auto& v : p.at("center_freqs")) f.params.center_freqs.push_back(parse_num(v, "center_freq"));
        f.params.validate();

        const auto& psi = doc.at("psi");
        const Index n_len = psi.at("window_len").get<Index>();
        const Index n_win = psi.at("n_windows").get<Index>();
        const auto& rows = psi.at("values");
        Eigen::MatrixXd vals(static_cast<Index>(rows.size()), n_win);
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (static_cast<Index>(rows[j].size()) != n_win) fail(ErrorKind::data, "model file: ragged psi rows");
            for (Index m = 0; m < n_win; ++m)
                vals(static_cast<Index>(j), m) = parse_num(rows[j][static_cast<std::size_t>(m)], "psi");
        }
        f.psi = LogVarianceField(vals, n_len);
        require(f.psi.n_components() == static_cast<Index>(f.params.n_components()), ErrorKind::data,
                "model file: psi rows do not match the components");

        const auto& diag = doc.at("diagnostics");
        for (const auto& v : diag.at("objective_trace")) f.objective_trace.push_back(parse_num(v, "trace"));
        f.warnings = diag.at("warnings").get<std::vector<std::string>>();
        f.selection = diag.at("selection");
        const auto& prov = doc.at("provenance");
        f.input_digest = prov.at("input_digest").get<std::string>();
        f.seed = prov.at("seed").get<std::uint64_t>();
        f.config = prov.at("config");
        return f;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::data, std::string("model file: ") + e.what());
    }
}

inline FittedModelFile read_model(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::data, path.string() + ": " + e.what());
    }
    return from_json(doc);
}

}  // namespace plso::io
