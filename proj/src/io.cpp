#include "gradleak/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "gradleak/errors.hpp"

namespace gradleak::io {

namespace fs = std::filesystem;

namespace {

template <class T>
T get_field(const Json& j, const char* key, const std::string& what) {
    if (!j.is_object() || !j.contains(key))
        throw FormatError(what + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(what + ": bad field '" + key + "': " + e.what());
    }
}

std::vector<std::size_t> ids_from_json(const Json& j, const std::string& what) {
    if (!j.is_array()) throw FormatError(what + " must be an array of label ids");
    std::vector<std::size_t> out;
    out.reserve(j.size());
    for (const Json& v : j) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw FormatError(what + " must hold non-negative integers");
        out.push_back(v.get<std::size_t>());
    }
    return out;
}

void put_u32(std::ostream& os, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    is.read(reinterpret_cast<char*>(b.data()), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::size_t> CaseFile::label_set() const {
    std::vector<std::size_t> s = labels;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

CaseFile to_case_file(const sim::GradientCase& gc) {
    CaseFile c;
    c.scenario = gc.scenario;
    c.delta_w = gc.delta_w;
    c.labels = gc.true_labels;
    if (gc.scenario.mode == sim::Mode::Sequence) c.sequence = gc.true_labels;
    c.vocab = gc.vocab;
    return c;
}

Json to_json(const sim::Scenario& sc) {
    Json j;
    j["d"] = sc.d;
    j["C"] = sc.classes;
    j["mode"] = sim::to_string(sc.mode);
    j["n"] = sc.n;
    j["k"] = sc.k;
    j["learning_rates"] = sc.learning_rates;
    j["latent"] = sim::to_string(sc.latent);
    if (sc.fixed_labels) j["fixed_labels"] = *sc.fixed_labels;
    j["embed_dim"] = sc.embed_dim;
    j["seed"] = sc.seed;
    return j;
}

sim::Scenario scenario_from_json(const Json& j) {
    const std::string what = "scenario";
    sim::Scenario sc;
    sc.d = get_field<std::size_t>(j, "d", what);
    sc.classes = get_field<std::size_t>(j, "C", what);
    try {
        sc.mode = sim::parse_mode(get_field<std::string>(j, "mode", what));
        sc.latent = sim::parse_latent(get_field<std::string>(j, "latent", what));
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("scenario: ") + e.what());
    }
    sc.n = get_field<std::size_t>(j, "n", what);
    sc.k = get_field<std::size_t>(j, "k", what);
    sc.learning_rates = get_field<std::vector<double>>(j, "learning_rates", what);
    if (j.contains("fixed_labels")) sc.fixed_labels = ids_from_json(j.at("fixed_labels"), "fixed_labels");
    sc.embed_dim = j.value("embed_dim", std::size_t{0});
    sc.seed = get_field<std::uint64_t>(j, "seed", what);
    return sc;
}

Json to_json(const Matrix& m) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& what) {
    if (!j.is_array()) throw FormatError(what + " must be a nested array");
    const std::size_t rows = j.size();
    if (rows == 0) return {};
    if (!j[0].is_array()) throw FormatError(what + " must be a nested array");
    const std::size_t cols = j[0].size();
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const Json& row : j) {
        if (!row.is_array() || row.size() != cols) throw FormatError(what + ": ragged rows");
        for (const Json& v : row) {
            if (!v.is_number()) throw FormatError(what + ": non-numeric entry");
            data.push_back(v.get<double>());
        }
    }
    try {
        return Matrix(rows, cols, std::move(data));
    } catch (const InvalidArgument& e) {
        throw FormatError(what + ": " + e.what());
    }
}

Json to_json(const defense::DefenseSpec& d) {
    Json j;
    j["kind"] = d.kind == defense::DefenseKind::SignSgd ? "sign" : "drop";
    if (d.kind == defense::DefenseKind::GradDrop) j["rate"] = d.rate;
    return j;
}

defense::DefenseSpec defense_from_json(const Json& j) {
    const auto kind = get_field<std::string>(j, "kind", "defense");
    defense::DefenseSpec d;
    if (kind == "sign") {
        d.kind = defense::DefenseKind::SignSgd;
    } else if (kind == "drop") {
        d.kind = defense::DefenseKind::GradDrop;
        d.rate = get_field<double>(j, "rate", "defense");
    } else {
        throw FormatError("defense: unknown kind '" + kind + "'");
    }
    return d;
}

Json to_json(const CaseFile& c, const std::optional<std::string>& sidecar) {
    Json j;
    j["version"] = kCaseVersion;
    j["d"] = c.delta_w.rows();
    j["C"] = c.delta_w.cols();
    j["scenario"] = to_json(c.scenario);
    if (sidecar) {
        j["delta_w_file"] = *sidecar;
    } else {
        j["delta_w"] = to_json(c.delta_w);
    }
    Json truth;
    truth["labels"] = c.labels;
    if (c.sequence) truth["sequence"] = *c.sequence;
    j["ground_truth"] = truth;
    if (c.defense_applied) j["defense_applied"] = to_json(*c.defense_applied);
    if (c.vocab) {
        Json v = Json::object();
        for (const auto& [id, word] : *c.vocab) v[std::to_string(id)] = word;
        j["vocab"] = v;
    }
    return j;
}

CaseFile case_from_json(const Json& j, const fs::path& base) {
    const std::string what = "case file";
    const int version = get_field<int>(j, "version", what);
    if (version != kCaseVersion)
        throw FormatError("case file: unsupported version " + std::to_string(version));
    const auto d = get_field<std::size_t>(j, "d", what);
    const auto c = get_field<std::size_t>(j, "C", what);

    CaseFile out;
    out.scenario = scenario_from_json(j.at("scenario"));
    if (j.contains("delta_w")) {
        out.delta_w = matrix_from_json(j.at("delta_w"), "delta_w");
    } else if (j.contains("delta_w_file")) {
        out.delta_w = read_grd(base / get_field<std::string>(j, "delta_w_file", what));
    } else {
        throw FormatError("case file: needs delta_w or delta_w_file");
    }
    if (out.delta_w.rows() != d || out.delta_w.cols() != c)
        throw DimensionError("case file: delta_w is " + std::to_string(out.delta_w.rows()) + "x" +
                             std::to_string(out.delta_w.cols()) + ", header says " +
                             std::to_string(d) + "x" + std::to_string(c));
    if (!j.contains("ground_truth")) throw FormatError("case file: missing ground_truth");
    const Json& truth = j.at("ground_truth");
    if (!truth.contains("labels")) throw FormatError("case file: ground_truth needs labels");
    out.labels = ids_from_json(truth.at("labels"), "ground_truth.labels");
    if (truth.contains("sequence")) out.sequence = ids_from_json(truth.at("sequence"), "ground_truth.sequence");
    for (std::size_t y : out.labels)
        if (y >= c) throw FormatError("case file: ground-truth label out of range");
    if (j.contains("defense_applied")) out.defense_applied = defense_from_json(j.at("defense_applied"));
    if (j.contains("vocab")) {
        std::map<std::size_t, std::string> v;
        for (const auto& [key, word] : j.at("vocab").items()) {
            try {
                v[std::stoul(key)] = word.get<std::string>();
            } catch (const std::exception&) {
                throw FormatError("case file: bad vocab entry '" + key + "'");
            }
        }
        out.vocab = std::move(v);
    }
    return out;
}

void write_case(const fs::path& path, const CaseFile& c, bool grd) {
    if (grd) {
        fs::path side = path;
        side.replace_extension(".grd");
        write_grd(side, c.delta_w);
        write_json_atomic(path, to_json(c, side.filename().string()));
    } else {
        write_json_atomic(path, to_json(c));
    }
}

CaseFile read_case(const fs::path& path) {
    return case_from_json(read_json(path), path.parent_path());
}

void write_grd(const fs::path& path, const Matrix& m) {
    if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX)
        throw InvalidArgument("grd: matrix too large");
    std::ostringstream os(std::ios::binary);
    os.write("GRD1", 4);
    put_u32(os, static_cast<std::uint32_t>(m.rows()));
    put_u32(os, static_cast<std::uint32_t>(m.cols()));
    for (double x : m.data()) {
        const auto bits = std::bit_cast<std::uint64_t>(x);
        std::array<char, 8> b{};
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
        os.write(b.data(), 8);
    }
    write_text_atomic(path, os.str());
}

Matrix read_grd(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("grd: cannot open " + path.string());
    std::array<char, 4> magic{};
    is.read(magic.data(), 4);
    if (!is || std::memcmp(magic.data(), "GRD1", 4) != 0)
        throw FormatError("grd: bad magic in " + path.string());
    const std::uint32_t rows = get_u32(is);
    const std::uint32_t cols = get_u32(is);
    if (!is) throw FormatError("grd: truncated header in " + path.string());
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    std::vector<double> data(n);
    std::array<unsigned char, 8> b{};
    for (std::size_t t = 0; t < n; ++t) {
        is.read(reinterpret_cast<char*>(b.data()), 8);
        if (!is) throw FormatError("grd: truncated data in " + path.string());
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        data[t] = std::bit_cast<double>(bits);
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw FormatError("grd: trailing bytes in " + path.string());
    try {
        return Matrix(rows, cols, std::move(data));
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("grd: ") + e.what());
    }
}

Json to_json(const gm::ToyDecoder& dec) {
    Json j;
    j["version"] = 1;
    j["W"] = to_json(dec.W);
    j["b"] = dec.b;
    j["embedding"] = to_json(dec.embedding);
    return j;
}

gm::ToyDecoder decoder_from_json(const Json& j) {
    const std::string what = "decoder file";
    if (get_field<int>(j, "version", what) != 1) throw FormatError("decoder file: unsupported version");
    gm::ToyDecoder dec;
    dec.W = matrix_from_json(j.at("W"), "W");
    dec.b = get_field<std::vector<double>>(j, "b", what);
    if (j.contains("embedding")) dec.embedding = matrix_from_json(j.at("embedding"), "embedding");
    try {
        dec.validate();
    } catch (const Error& e) {
        throw FormatError(std::string("decoder file: ") + e.what());
    }
    return dec;
}

void write_decoder(const fs::path& path, const gm::ToyDecoder& dec) {
    write_json_atomic(path, to_json(dec));
}

gm::ToyDecoder read_decoder(const fs::path& path) { return decoder_from_json(read_json(path)); }

Json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path.string());
    try {
        return Json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot write " + tmp.string());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!os) throw Error("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error("cannot rename " + tmp.string() + ": " + ec.message());
    }
}

void write_json_atomic(const fs::path& path, const Json& j) {
    write_text_atomic(path, j.dump(1) + "\n");
}

}  // namespace gradleak::io
