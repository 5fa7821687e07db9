#include "bof4/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace bof4 {

namespace {

using json = nlohmann::json;

// --- little-endian primitives -----------------------------------------------

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw CorruptDataError("container truncated");
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
};

// --- codebook JSON helpers ---------------------------------------------------

std::string mode_str(NormalizationMode m) {
    return m == NormalizationMode::Absolute ? "absolute" : "signed";
}

NormalizationMode parse_mode(const std::string& s) {
    if (s == "absolute") return NormalizationMode::Absolute;
    if (s == "signed") return NormalizationMode::Signed;
    throw SchemaError("codebook json: unknown mode '" + s + "'");
}

std::string metric_str(Metric m) { return m == Metric::Mse ? "mse" : "mae"; }

Metric parse_metric(const std::string& s) {
    if (s == "mse") return Metric::Mse;
    if (s == "mae") return Metric::Mae;
    throw SchemaError("codebook json: unknown metric '" + s + "'");
}

std::string objective_str(Objective o) {
    return o == Objective::EndToEnd ? "end_to_end" : "normalized";
}

Objective parse_objective(const std::string& s) {
    if (s == "end_to_end") return Objective::EndToEnd;
    if (s == "normalized") return Objective::NormalizedOnly;
    throw SchemaError("codebook json: unknown objective '" + s + "'");
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw SchemaError(std::string("codebook json: unknown field '") + it.key() +
                              "' in " + where);
        }
    }
}

const json& require(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw SchemaError(std::string("codebook json: missing field '") + key + "'");
    }
    return *it;
}

} // namespace

std::vector<std::uint8_t> write_quantized(const QuantizedTensor& qt) {
    const std::uint64_t n = qt.layout.element_count;
    if (qt.codes.size() != (n + 1) / 2) {
        throw InvalidInputError("write_quantized: code byte count mismatch");
    }
    if (qt.constants.size() != qt.layout.block_count()) {
        throw InvalidInputError("write_quantized: constant count mismatch");
    }
    std::vector<std::uint8_t> out;
    out.reserve(20 + 64 + qt.codes.size() + 2 * qt.constants.size());
    out.insert(out.end(), {'B', 'Q', 'T', '1'});
    put_u8(out, 1);
    put_u8(out, qt.mode == NormalizationMode::Signed ? 1 : 0);
    put_u8(out, qt.outliers ? 1 : 0);
    put_u8(out, 0);
    put_u32(out, qt.layout.block_size);
    put_u64(out, n);
    for (float v : qt.levels) put_f32(out, v);
    out.insert(out.end(), qt.codes.begin(), qt.codes.end());
    for (std::uint16_t c : qt.constants) put_u16(out, c);
    if (qt.outliers) {
        const OutlierSet& s = *qt.outliers;
        if (s.indices.size() != s.values.size()) {
            throw InvalidInputError("write_quantized: outlier index/value mismatch");
        }
        put_u64(out, s.indices.size());
        for (std::size_t i = 0; i < s.indices.size(); ++i) {
            put_u64(out, s.indices[i]);
            put_u16(out, s.values[i]);
        }
    }
    return out;
}

QuantizedTensor read_quantized(std::span<const std::uint8_t> bytes) {
    Reader r{bytes};
    r.need(4);
    if (std::memcmp(bytes.data(), "BQT1", 4) != 0) {
        throw UnsupportedFormatError("container: bad magic");
    }
    r.pos = 4;
    const std::uint8_t version = r.u8();
    if (version != 1) throw UnsupportedFormatError("container: unsupported version");
    const std::uint8_t mode = r.u8();
    if (mode > 1) throw CorruptDataError("container: invalid mode byte");
    const std::uint8_t flags = r.u8();
    if (flags > 1) throw CorruptDataError("container: unknown flag bits");
    (void)r.u8(); // reserved

    QuantizedTensor qt;
    qt.mode = mode == 1 ? NormalizationMode::Signed : NormalizationMode::Absolute;
    qt.layout.block_size = r.u32();
    if (qt.layout.block_size == 0) throw CorruptDataError("container: zero block size");
    qt.layout.element_count = r.u64();

    for (float& v : qt.levels) v = r.f32();
    for (std::size_t i = 1; i < qt.levels.size(); ++i) {
        if (!(qt.levels[i] > qt.levels[i - 1])) {
            throw CorruptDataError("container: levels not strictly increasing");
        }
    }

    const std::uint64_t n = qt.layout.element_count;
    const std::uint64_t code_bytes = (n + 1) / 2;
    r.need(code_bytes);
    qt.codes.assign(bytes.begin() + r.pos, bytes.begin() + r.pos + code_bytes);
    r.pos += code_bytes;

    const std::uint64_t blocks = qt.layout.block_count();
    qt.constants.resize(blocks);
    for (std::uint64_t b = 0; b < blocks; ++b) qt.constants[b] = r.u16();

    if (flags & 1) {
        const std::uint64_t count = r.u64();
        if (count > n) throw CorruptDataError("container: more outliers than elements");
        OutlierSet set;
        set.q = 0.0; // the detection quantile is not stored
        set.indices.resize(count);
        set.values.resize(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            set.indices[i] = r.u64();
            set.values[i] = r.u16();
            if (set.indices[i] >= n || (i > 0 && set.indices[i] <= set.indices[i - 1])) {
                throw CorruptDataError("container: outlier indices invalid");
            }
        }
        qt.outliers = std::move(set);
    }
    if (r.pos != bytes.size()) throw CorruptDataError("container: trailing bytes");
    return qt;
}

void write_quantized_file(const std::filesystem::path& path, const QuantizedTensor& qt) {
    const std::vector<std::uint8_t> bytes = write_quantized(qt);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CorruptDataError("cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CorruptDataError("write failed: " + path.string());
}

QuantizedTensor read_quantized_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CorruptDataError("cannot open: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return read_quantized(bytes);
}

std::string write_codebook_json(const Codebook& cb) {
    json j;
    j["name"] = cb.name;
    j["num_levels"] = cb.spec.num_levels;
    j["block_size"] = cb.spec.block_size;
    j["mode"] = mode_str(cb.spec.mode);
    j["metric"] = metric_str(cb.spec.metric);
    j["objective"] = objective_str(cb.spec.objective);
    j["constrained"] = cb.spec.constrained_levels;
    // Widening to double keeps the exact 32-bit values; the serializer emits
    // the shortest decimal that parses back to the same double.
    std::vector<double> levels(cb.levels.begin(), cb.levels.end());
    j["levels"] = levels;
    json prov;
    prov["method"] = cb.provenance.method;
    prov["seed"] = cb.provenance.seed;
    prov["sample_count"] = cb.provenance.sample_count;
    prov["iterations"] = cb.provenance.iterations;
    prov["final_objective"] = cb.provenance.final_objective;
    j["provenance"] = prov;
    return j.dump(2) + "\n";
}

Codebook read_codebook_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("codebook json: parse failure: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("codebook json: document is not an object");
    reject_unknown(j,
                   {"name", "num_levels", "block_size", "mode", "metric", "objective",
                    "constrained", "levels", "provenance"},
                   "document");

    Codebook cb;
    try {
        cb.name = require(j, "name").get<std::string>();
        cb.spec.num_levels = require(j, "num_levels").get<int>();
        cb.spec.block_size = require(j, "block_size").get<int>();
        cb.spec.mode = parse_mode(require(j, "mode").get<std::string>());
        cb.spec.metric = parse_metric(require(j, "metric").get<std::string>());
        cb.spec.objective = parse_objective(require(j, "objective").get<std::string>());
        cb.spec.constrained_levels =
            require(j, "constrained").get<std::vector<double>>();
        const std::vector<double> levels = require(j, "levels").get<std::vector<double>>();
        cb.levels.assign(levels.begin(), levels.end());
        const json& prov = require(j, "provenance");
        if (!prov.is_object()) throw SchemaError("codebook json: provenance not an object");
        reject_unknown(prov, {"method", "seed", "sample_count", "iterations", "final_objective"},
                       "provenance");
        cb.provenance.method = require(prov, "method").get<std::string>();
        cb.provenance.seed = require(prov, "seed").get<std::uint64_t>();
        cb.provenance.sample_count = require(prov, "sample_count").get<std::uint64_t>();
        cb.provenance.iterations = require(prov, "iterations").get<int>();
        cb.provenance.final_objective = require(prov, "final_objective").get<double>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("codebook json: bad field type: ") + e.what());
    }

    if (cb.spec.num_levels != static_cast<int>(cb.levels.size())) {
        throw SchemaError("codebook json: num_levels does not match levels array");
    }
    if (cb.spec.block_size < 1) throw SchemaError("codebook json: block_size must be >= 1");
    try {
        validate_codebook(cb);
    } catch (const InvalidCodebookError& e) {
        throw SchemaError(std::string("codebook json: ") + e.what());
    }
    return cb;
}

void write_codebook_file(const std::filesystem::path& path, const Codebook& cb) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw CorruptDataError("cannot open for writing: " + path.string());
    f << write_codebook_json(cb);
    if (!f) throw CorruptDataError("write failed: " + path.string());
}

Codebook read_codebook_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw CorruptDataError("cannot open: " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return read_codebook_json(text);
}

void write_raw_tensor(const std::filesystem::path& path, std::span<const float> data) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(data.size() * 4);
    for (float v : data) put_f32(bytes, v);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CorruptDataError("cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CorruptDataError("write failed: " + path.string());
}

std::vector<float> read_raw_tensor(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CorruptDataError("cannot open: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() % 4 != 0) {
        throw CorruptDataError("raw tensor: size is not a multiple of 4 bytes");
    }
    std::vector<float> out(bytes.size() / 4);
    Reader r{bytes};
    for (float& v : out) v = r.f32();
    return out;
}

} // namespace bof4
