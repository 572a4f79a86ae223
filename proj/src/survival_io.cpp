#include "structcox/survival_io.hpp"

#include <fmt/format.h>

#include "structcox/error.hpp"
#include "structcox/text_io.hpp"

namespace structcox {

SurvivalDataset parse_dataset(std::string_view text)
{
    std::vector<CountingRecord> records;
    std::vector<std::string> names;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool have_header = false;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        const auto fields = split_fields(line);
        if (!have_header) {
            static constexpr std::string_view expected[] = {"id", "start", "stop", "event"};
            if (fields.size() < 5) throw InputError(fmt::format("line {}: header needs id,start,stop,event and at least one covariate", line_no));
            for (int k = 0; k < 4; ++k) {
                if (fields[k] != expected[k]) {
                    throw InputError(fmt::format("line {}: header column {} must be '{}'", line_no, k + 1, expected[k]));
                }
            }
            for (std::size_t k = 4; k < fields.size(); ++k) {
                if (fields[k].empty()) throw InputError(fmt::format("line {}: empty covariate name", line_no));
                names.emplace_back(fields[k]);
            }
            have_header = true;
            continue;
        }
        if (fields.size() != names.size() + 4) {
            throw InputError(fmt::format("line {}: expected {} fields, got {}", line_no, names.size() + 4, fields.size()));
        }
        const auto ctx = fmt::format("line {}", line_no);
        CountingRecord r;
        r.subject_id = std::string(fields[0]);
        if (r.subject_id.empty()) throw InputError(fmt::format("line {}: empty id", line_no));
        r.start = parse_double(fields[1], ctx);
        r.stop = parse_double(fields[2], ctx);
        const auto ev = parse_integer(fields[3], ctx);
        if (ev != 0 && ev != 1) throw InputError(fmt::format("line {}: event must be 0 or 1", line_no));
        r.event = ev == 1;
        if (!(r.start < r.stop)) throw InputError(fmt::format("line {}: start must be before stop", line_no));
        r.covariates.reserve(names.size());
        for (std::size_t k = 4; k < fields.size(); ++k) r.covariates.push_back(parse_double(fields[k], ctx));
        records.push_back(std::move(r));
    }
    if (!have_header) throw InputError("line 1: missing header");
    return SurvivalDataset::from_records(records, std::move(names));
}

SurvivalDataset read_dataset(const std::string& path)
{
    try {
        return parse_dataset(read_file(path));
    } catch (const InputError& e) {
        throw InputError(fmt::format("{}: {}", path, e.what()));
    }
}

std::string write_dataset(const SurvivalDataset& data)
{
    fmt::memory_buffer out;
    fmt::format_to(std::back_inserter(out), "id,start,stop,event");
    for (const auto& name : data.covariate_names) fmt::format_to(std::back_inserter(out), ",{}", name);
    out.push_back('\n');
    for (int i = 0; i < data.num_records(); ++i) {
        fmt::format_to(std::back_inserter(out), "{},{},{},{}", data.subject_ids[data.subject[i]],
                       format_double(data.start[i]), format_double(data.stop[i]), int{data.event[i]});
        for (int j = 0; j < data.num_covariates(); ++j) {
            fmt::format_to(std::back_inserter(out), ",{}", format_double(data.x(i, j)));
        }
        out.push_back('\n');
    }
    return fmt::to_string(out);
}

} // namespace structcox
