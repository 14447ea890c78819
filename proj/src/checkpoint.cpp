#include "csinet/checkpoint.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "csinet/binio.hpp"
#include "csinet/errors.hpp"

namespace csinet::ckpt {

namespace {

constexpr const char* kMagic = "csinet-checkpoint v1";

bool has_whitespace(const std::string& s) {
    for (unsigned char c : s)
        if (std::isspace(c)) return true;
    return false;
}

[[noreturn]] void bad_format(const std::string& what, std::int64_t offset) {
    throw FormatError("checkpoint: " + what, offset);
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& nt : tensors)
        if (nt.name == name) return &nt.value;
    return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& c) {
    if (c.config_text.find('\n') != std::string::npos)
        throw UsageError("checkpoint config must be a single line");
    std::unordered_set<std::string> seen;
    for (const auto& nt : c.tensors) {
        if (nt.name.empty() || has_whitespace(nt.name))
            throw UsageError("checkpoint tensor name must be non-empty without whitespace: '" +
                             nt.name + "'");
        if (!seen.insert(nt.name).second)
            throw UsageError("duplicate checkpoint tensor name: '" + nt.name + "'");
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);

    os << kMagic << '\n';
    if (!c.config_text.empty()) os << "config " << c.config_text << '\n';
    std::int64_t offset = 0;
    for (const auto& nt : c.tensors) {
        os << "tensor " << nt.name << ' ' << nt.value.shape().size();
        for (int d : nt.value.shape()) os << ' ' << d;
        os << ' ' << offset << '\n';
        offset += nt.value.numel() * 4;
    }
    os << "blob " << offset << '\n';
    for (const auto& nt : c.tensors)
        binio::put_f32_array(os, nt.value.data(), static_cast<std::size_t>(nt.value.numel()));
    os.flush();
    if (!os) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);

    Checkpoint c;
    std::string line;
    std::int64_t line_start = 0;

    auto next_line = [&]() -> bool {
        line_start = static_cast<std::int64_t>(is.tellg());
        return static_cast<bool>(std::getline(is, line));
    };

    if (!next_line() || line != kMagic) bad_format("bad magic line", 0);

    std::int64_t expected_offset = 0;
    bool saw_blob = false;
    std::int64_t blob_bytes = 0;
    while (next_line()) {
        if (line.rfind("config ", 0) == 0) {
            if (!c.config_text.empty()) bad_format("duplicate config line", line_start);
            if (!c.tensors.empty()) bad_format("config line must precede tensors", line_start);
            c.config_text = line.substr(7);
        } else if (line.rfind("tensor ", 0) == 0) {
            std::istringstream ss(line.substr(7));
            std::string name;
            std::size_t rank = 0;
            if (!(ss >> name >> rank) || rank > 8) bad_format("bad tensor line", line_start);
            std::vector<int> shape(rank);
            for (auto& d : shape) {
                if (!(ss >> d) || d <= 0) bad_format("bad tensor dimension", line_start);
            }
            std::int64_t off = -1;
            std::string trailing;
            if (!(ss >> off) || off != expected_offset || (ss >> trailing))
                bad_format("bad tensor offset for '" + name + "'", line_start);
            if (c.find(name) != nullptr) bad_format("duplicate tensor '" + name + "'", line_start);
            c.tensors.push_back({name, Tensor::zeros(shape)});
            expected_offset += c.tensors.back().value.numel() * 4;
        } else if (line.rfind("blob ", 0) == 0) {
            std::istringstream ss(line.substr(5));
            std::string trailing;
            if (!(ss >> blob_bytes) || blob_bytes != expected_offset || (ss >> trailing))
                bad_format("blob size disagrees with manifest", line_start);
            saw_blob = true;
            break;
        } else {
            bad_format("unrecognized manifest line", line_start);
        }
    }
    if (!saw_blob) bad_format("missing blob line", line_start);

    const std::int64_t blob_start = static_cast<std::int64_t>(is.tellg());
    std::int64_t cursor = 0;
    for (auto& nt : c.tensors) {
        if (!binio::get_f32_array(is, nt.value.data(), static_cast<std::size_t>(nt.value.numel())))
            bad_format("blob truncated in tensor '" + nt.name + "'",
                       blob_start + cursor + static_cast<std::int64_t>(is.gcount()));
        cursor += nt.value.numel() * 4;
    }
    // Anything after the blob is corruption, not padding.
    char extra;
    if (is.read(&extra, 1)) bad_format("trailing bytes after blob", blob_start + blob_bytes);
    return c;
}

}  // namespace csinet::ckpt
