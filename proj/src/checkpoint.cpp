// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#include "cmt/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace cmt::diff {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'T', '1'};

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    void need(std::size_t n, const char* what) const {
        if (pos_ + n > bytes_.size())
            throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= std::uint16_t(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= std::uint64_t(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, static_cast<std::uint32_t>(entries.size()));
    for (const CheckpointEntry& e : entries) {
        if (e.name.size() > 0xffff) throw CheckpointError("checkpoint entry name too long: " + e.name);
        if (e.array.rank() > 0xff) throw CheckpointError("checkpoint entry rank too large: " + e.name);
        put_u16(buf, static_cast<std::uint16_t>(e.name.size()));
        buf.append(e.name);
        buf.push_back(static_cast<char>(e.array.rank()));
        for (std::size_t d : e.array.shape) put_u32(buf, static_cast<std::uint32_t>(d));
        for (double v : e.array.data) put_f64(buf, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError("short write to checkpoint: " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r(std::move(bytes));
    const std::string magic = r.str(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw CheckpointError("bad magic in checkpoint: " + path);
    const std::uint32_t count = r.u32("entry count");
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const std::uint16_t name_len = r.u16("name length");
        e.name = r.str(name_len, "name");
        const std::uint8_t rank = r.u8("rank");
        std::vector<std::size_t> shape(rank);
        std::size_t numel = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            shape[d] = r.u32("dim");
            numel *= shape[d];
        }
        e.array = NumArray::zeros(shape);
        for (std::size_t j = 0; j < numel; ++j) e.array.data[j] = r.f64("data");
        entries.push_back(std::move(e));
    }
    if (!r.at_end()) throw CheckpointError("trailing bytes after last entry: " + path);
    return entries;
}

void save_param_stores(const std::string& path, const PrefixedStores& stores) {
    std::vector<CheckpointEntry> entries;
    for (const auto& [prefix, ps] : stores)
        for (const std::string& name : ps->param_names())
            entries.push_back(CheckpointEntry{prefix + name, ps->value(name)});
    write_checkpoint(path, entries);
}

void load_param_store(const std::vector<CheckpointEntry>& entries, const std::string& prefix,
                      ParamStore& ps) {
    for (const std::string& name : ps.param_names()) {
        const std::string full = prefix + name;
        const CheckpointEntry* found = nullptr;
        for (const CheckpointEntry& e : entries)
            if (e.name == full) {
                found = &e;
                break;
            }
        if (!found) throw CheckpointError("checkpoint missing entry '" + full + "'");
        NumArray& dst = ps.value(name);
        if (found->array.shape != dst.shape)
            throw CheckpointError("checkpoint entry '" + full + "' has shape " +
                                  found->array.shape_str() + ", network expects " + dst.shape_str());
        dst.data = found->array.data;
    }
}

}  // namespace cmt::diff
