#include <cstring>

#include "modrec/io_util.hpp"
#include "modrec/models.hpp"

namespace modrec::ckpt {

void save(const std::string& path, const std::vector<Parameter<float>*>& params) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    io::put_u32(buf, 1);  // version
    io::put_u32(buf, static_cast<std::uint32_t>(params.size()));
    for (const Parameter<float>* p : params) {
        io::put_u16(buf, static_cast<std::uint16_t>(p->name.size()));
        buf.append(p->name);
        io::put_u32(buf, static_cast<std::uint32_t>(p->value.ndim()));
        for (int d : p->value.shape()) io::put_u32(buf, static_cast<std::uint32_t>(d));
        for (std::size_t i = 0; i < p->value.numel(); ++i) io::put_f32(buf, p->value[i]);
    }
    io::write_file(path, buf);
}

void load_into(const std::string& path, const std::vector<Parameter<float>*>& params) {
    const std::vector<std::uint8_t> bytes = io::read_file(path);
    io::Reader r(bytes.data(), bytes.size());
    char magic[8];
    r.read_bytes(magic, 8, "checkpoint magic");
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("bad checkpoint magic \"" + std::string(magic, 8) + "\" in " + path);
    const std::uint32_t version = r.get_u32("checkpoint version");
    if (version != 1)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t n = r.get_u32("parameter count");

    std::vector<Parameter<float>*> pending(params);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint16_t name_len = r.get_u16("parameter name length");
        const std::string name = r.get_string(name_len, "parameter name");
        const std::uint32_t ndim = r.get_u32("parameter rank");
        Shape shape(ndim);
        for (std::uint32_t d = 0; d < ndim; ++d)
            shape[d] = static_cast<int>(r.get_u32("parameter dim"));
        Tensor<float> value(shape);
        for (std::size_t e = 0; e < value.numel(); ++e) value[e] = r.get_f32("parameter payload");

        auto it = std::find_if(pending.begin(), pending.end(),
                               [&](Parameter<float>* p) { return p->name == name; });
        if (it == pending.end())
            throw DataError("checkpoint parameter \"" + name + "\" not expected by this model");
        if ((*it)->value.shape() != shape)
            throw DataError("checkpoint parameter \"" + name + "\" has shape " + shape_str(shape) +
                            ", model expects " + shape_str((*it)->value.shape()));
        (*it)->value = std::move(value);
        pending.erase(it);
    }
    if (!pending.empty())
        throw DataError("checkpoint missing parameter \"" + pending.front()->name + "\"");
}

}  // namespace modrec::ckpt
