#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "auregress/tensor.hpp"

namespace auregress {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format stores raw little-endian doubles");

// Versioned binary container shared by every model: 8-byte magic, manifest of
// (name, shape, byte offset into the data section), then raw 64-bit values.
class Checkpoint {
public:
    static constexpr char kMagic[9] = "AUREGV01";

    void set(const std::string& name, Shape shape, std::vector<double> values) {
        if (numel(shape) != static_cast<std::int64_t>(values.size()))
            throw std::invalid_argument("checkpoint: shape " + shape_str(shape) + " does not match values for '" +
                                        name + "'");
        entries_[name] = {std::move(shape), std::move(values)};
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    const std::pair<Shape, std::vector<double>>& get(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::out_of_range("checkpoint: no tensor named '" + name + "'");
        return it->second;
    }

    void set_fingerprint(std::uint64_t fp) {
        set("__meta__/fingerprint", {2},
            {static_cast<double>(fp >> 32), static_cast<double>(fp & 0xffffffffull)});
    }

    std::uint64_t fingerprint() const {
        if (!has("__meta__/fingerprint")) return 0;
        const auto& v = get("__meta__/fingerprint").second;
        return (static_cast<std::uint64_t>(v[0]) << 32) | static_cast<std::uint64_t>(v[1]);
    }

    // write-new-then-rename so an existing checkpoint is never mutated in place
    void save(const std::filesystem::path& path) const {
        namespace fs = std::filesystem;
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        fs::path tmp = path;
        tmp += ".tmp";
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (!f) throw std::runtime_error("checkpoint: cannot open " + tmp.string());
            f.write(kMagic, 8);
            write_u32(f, static_cast<std::uint32_t>(entries_.size()));
            std::uint64_t offset = 0;
            for (const auto& [name, entry] : entries_) {
                write_u32(f, static_cast<std::uint32_t>(name.size()));
                f.write(name.data(), static_cast<std::streamsize>(name.size()));
                write_u32(f, static_cast<std::uint32_t>(entry.first.size()));
                for (auto d : entry.first) write_u64(f, static_cast<std::uint64_t>(d));
                write_u64(f, offset);
                offset += entry.second.size() * sizeof(double);
            }
            write_u64(f, offset);
            for (const auto& [name, entry] : entries_)
                f.write(reinterpret_cast<const char*>(entry.second.data()),
                        static_cast<std::streamsize>(entry.second.size() * sizeof(double)));
            if (!f) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
        }
        fs::rename(tmp, path);
    }

    static Checkpoint load(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
        char magic[8];
        f.read(magic, 8);
        if (!f || std::memcmp(magic, kMagic, 8) != 0)
            throw std::runtime_error("checkpoint: bad magic in " + path.string());
        const std::uint32_t n = read_u32(f);
        struct Row {
            std::string name;
            Shape shape;
            std::uint64_t offset;
        };
        std::vector<Row> rows(n);
        for (auto& r : rows) {
            const std::uint32_t len = read_u32(f);
            r.name.resize(len);
            f.read(r.name.data(), len);
            const std::uint32_t nd = read_u32(f);
            r.shape.resize(nd);
            for (auto& d : r.shape) d = static_cast<std::int64_t>(read_u64(f));
            r.offset = read_u64(f);
        }
        const std::uint64_t data_bytes = read_u64(f);
        std::vector<char> data(data_bytes);
        f.read(data.data(), static_cast<std::streamsize>(data_bytes));
        if (!f) throw std::runtime_error("checkpoint: truncated file " + path.string());
        Checkpoint ck;
        for (auto& r : rows) {
            const std::size_t count = static_cast<std::size_t>(numel(r.shape));
            if (r.offset + count * sizeof(double) > data_bytes)
                throw std::runtime_error("checkpoint: entry '" + r.name + "' overruns data section");
            std::vector<double> v(count);
            std::memcpy(v.data(), data.data() + r.offset, count * sizeof(double));
            ck.set(r.name, std::move(r.shape), std::move(v));
        }
        return ck;
    }

    const std::map<std::string, std::pair<Shape, std::vector<double>>>& entries() const { return entries_; }

private:
    static void write_u32(std::ofstream& f, std::uint32_t v) {
        f.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void write_u64(std::ofstream& f, std::uint64_t v) {
        f.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static std::uint32_t read_u32(std::ifstream& f) {
        std::uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    static std::uint64_t read_u64(std::ifstream& f) {
        std::uint64_t v = 0;
        f.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }

    std::map<std::string, std::pair<Shape, std::vector<double>>> entries_;
};

// convenience for model structs that expose named parameter lists
inline void checkpoint_put(Checkpoint& ck, const std::string& prefix,
                           const std::vector<std::pair<std::string, TensorPtr>>& named) {
    for (const auto& [name, t] : named) ck.set(prefix + "/" + name, t->shape, t->value);
}

inline void checkpoint_take(const Checkpoint& ck, const std::string& prefix,
                            const std::vector<std::pair<std::string, TensorPtr>>& named) {
    for (const auto& [name, t] : named) {
        const auto& [shape, values] = ck.get(prefix + "/" + name);
        if (shape != t->shape)
            throw std::runtime_error("checkpoint: shape mismatch for '" + prefix + "/" + name + "': file has " +
                                     shape_str(shape) + ", model wants " + shape_str(t->shape));
        t->value = values;
    }
}

} // namespace auregress
