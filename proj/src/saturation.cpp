/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/saturation.hpp>

#include "yaml_util.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace vetgate::saturation
{

using probe::MetricField;

namespace
{

constexpr std::array<MetricField, 7> kDefaultFields {
    MetricField::GpuUtilization,
    MetricField::SmActivity,
    MetricField::SmOccupancy,
    MetricField::TensorActivity,
    MetricField::MemoryBandwidthUtilization,
    MetricField::NvlinkTxBandwidth,
    MetricField::NvlinkRxBandwidth,
};

using PerGpu = std::map<probe::GpuId, std::map<MetricField, const MetricSeries *>>;

double unit_clamp(double v)
{
    return std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
}

// Per-timestamp combination of the available input series of one GPU,
// averaged over time. nullopt when none of the inputs is present.
template <typename Combine>
std::optional<double> gpu_component(const std::map<MetricField, const MetricSeries *> &fields,
                                    std::initializer_list<MetricField> inputs,
                                    Combine combine)
{
    std::map<std::int64_t, std::map<MetricField, double>> by_time;
    bool any = false;
    for (auto f : inputs)
    {
        auto it = fields.find(f);
        if (it == fields.end())
        {
            continue;
        }
        any = true;
        for (const auto &p : it->second->samples)
        {
            by_time[p.timestamp_ms][f] = p.value;
        }
    }
    if (!any || by_time.empty())
    {
        return std::nullopt;
    }
    double sum = 0.0;
    for (const auto &[_, values] : by_time)
    {
        sum += combine(values);
    }
    return sum / static_cast<double>(by_time.size());
}

template <typename Combine>
std::optional<double> component(const PerGpu &per_gpu, std::initializer_list<MetricField> inputs, Combine combine)
{
    double sum = 0.0;
    int gpus   = 0;
    for (const auto &[_, fields] : per_gpu)
    {
        if (auto v = gpu_component(fields, inputs, combine))
        {
            sum += *v;
            ++gpus;
        }
    }
    if (gpus == 0)
    {
        return std::nullopt;
    }
    return unit_clamp(sum / gpus);
}

double value_of(const std::map<MetricField, double> &values, MetricField f)
{
    auto it = values.find(f);
    return it == values.end() ? 0.0 : it->second;
}

std::string csv_number(double v)
{
    return fmt::format("{}", v);
}

MetricField field_from_file(const std::filesystem::path &file)
{
    auto stem  = file.stem().string();
    auto field = probe::parse_field(stem);
    if (!field)
    {
        throw SyntaxError(fmt::format("{}: '{}' is not a metric field", file.string(), stem), 1, 1);
    }
    return *field;
}

std::vector<MetricSeries> group_rows(MetricField field, const std::vector<std::tuple<std::int64_t, std::string, double>> &rows)
{
    std::vector<MetricSeries> out;
    std::map<probe::GpuId, std::size_t> index;
    for (const auto &[ts, gpu_text, value] : rows)
    {
        auto gpu = probe::GpuId::parse(gpu_text);
        auto it  = index.find(gpu);
        if (it == index.end())
        {
            it = index.emplace(gpu, out.size()).first;
            out.push_back(MetricSeries {gpu, field, {}});
        }
        out[it->second].samples.push_back(Point {ts, value});
    }
    return out;
}

} // namespace

void Weights::validate() const
{
    for (double w : {compute, memory, network})
    {
        if (!std::isfinite(w) || w < 0.0)
        {
            throw InvalidWeights(fmt::format("weights must be finite and >= 0 (got {},{},{})", compute, memory, network));
        }
    }
    if (std::abs(compute + memory + network - 1.0) > 1e-9)
    {
        throw InvalidWeights(fmt::format("weights must sum to 1 (got {},{},{})", compute, memory, network));
    }
}

Weights Weights::parse(std::string_view text)
{
    std::array<double, 3> v {};
    std::size_t pos = 0;
    for (std::size_t i = 0; i < 3; ++i)
    {
        auto comma = text.find(',', pos);
        if ((i < 2) == (comma == std::string_view::npos))
        {
            throw InvalidWeights(fmt::format("weights must be three comma-separated numbers C,M,N (got '{}')", text));
        }
        auto item = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        while (!item.empty() && item.front() == ' ')
        {
            item.remove_prefix(1);
        }
        while (!item.empty() && item.back() == ' ')
        {
            item.remove_suffix(1);
        }
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v[i]);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
        {
            throw InvalidWeights(fmt::format("'{}' is not a number in weights '{}'", item, text));
        }
        pos = comma + 1;
    }
    Weights w {v[0], v[1], v[2]};
    w.validate();
    return w;
}

std::span<const MetricField> default_fields()
{
    return kDefaultFields;
}

std::vector<MetricSeries> collect(const probe::GpuGroup &group,
                                  const probe::Probe &probe,
                                  std::int64_t interval_ms,
                                  std::int64_t duration_ms,
                                  std::span<const MetricField> extra)
{
    if (group.gpus.empty())
    {
        throw PreconditionError(fmt::format("GPU group '{}' is empty", group.owner));
    }
    probe::check_sampling_request(interval_ms, duration_ms);
    std::vector<MetricField> fields(kDefaultFields.begin(), kDefaultFields.end());
    for (auto f : extra)
    {
        if (std::find(fields.begin(), fields.end(), f) == fields.end())
        {
            fields.push_back(f);
        }
    }
    auto samples = probe.sample(group, fields, interval_ms, duration_ms);

    std::map<std::pair<probe::GpuId, MetricField>, std::vector<Point>> grouped;
    for (const auto &s : samples)
    {
        grouped[{s.gpu, s.field}].push_back(Point {s.timestamp_ms, s.value});
    }
    std::vector<MetricSeries> out;
    for (const auto &gpu : group.gpus)
    {
        for (auto f : fields)
        {
            auto it = grouped.find({gpu, f});
            if (it == grouped.end() || it->second.empty())
            {
                continue;
            }
            auto points = std::move(it->second);
            std::stable_sort(points.begin(), points.end(), [](const Point &a, const Point &b) { return a.timestamp_ms < b.timestamp_ms; });
            out.push_back(MetricSeries {gpu, f, std::move(points)});
        }
    }
    return out;
}

SaturationScore score(const std::vector<MetricSeries> &series, const Weights &weights, double link_peak_gbps)
{
    weights.validate();
    if (!(link_peak_gbps > 0.0) || !std::isfinite(link_peak_gbps))
    {
        throw PreconditionError(fmt::format("link peak must be a positive bandwidth (got {})", link_peak_gbps));
    }
    if (series.empty())
    {
        throw PreconditionError("no metric series to score");
    }

    PerGpu per_gpu;
    SaturationScore out;
    out.weights          = weights;
    bool first           = true;
    for (const auto &s : series)
    {
        if (s.samples.empty())
        {
            throw PreconditionError(fmt::format("series {} {} is empty", s.gpu.str(), probe::field_name(s.field)));
        }
        for (std::size_t i = 1; i < s.samples.size(); ++i)
        {
            if (s.samples[i].timestamp_ms <= s.samples[i - 1].timestamp_ms)
            {
                throw PreconditionError(fmt::format("series {} {} is not strictly time-ordered", s.gpu.str(), probe::field_name(s.field)));
            }
        }
        per_gpu[s.gpu][s.field] = &s;
        auto lo                 = s.samples.front().timestamp_ms;
        auto hi                 = s.samples.back().timestamp_ms;
        out.window_start_ms     = first ? lo : std::min(out.window_start_ms, lo);
        out.window_end_ms       = first ? hi : std::max(out.window_end_ms, hi);
        first                   = false;
    }

    auto compute = component(per_gpu, {MetricField::SmActivity, MetricField::TensorActivity}, [](const auto &v) {
        return std::max(unit_clamp(value_of(v, MetricField::SmActivity)), unit_clamp(value_of(v, MetricField::TensorActivity)));
    });
    auto memory = component(per_gpu, {MetricField::MemoryBandwidthUtilization},
                            [](const auto &v) { return unit_clamp(value_of(v, MetricField::MemoryBandwidthUtilization)); });
    auto network = component(per_gpu, {MetricField::NvlinkTxBandwidth, MetricField::NvlinkRxBandwidth}, [&](const auto &v) {
        double total = std::max(0.0, value_of(v, MetricField::NvlinkTxBandwidth)) + std::max(0.0, value_of(v, MetricField::NvlinkRxBandwidth));
        return unit_clamp(total / (2.0 * link_peak_gbps));
    });

    auto require = [](std::optional<double> v, double weight, std::string_view name, std::string_view inputs) {
        if (!v && weight > 0.0)
        {
            throw MissingField(fmt::format("{} component needs {} (or set its weight to 0)", name, inputs));
        }
        return v.value_or(0.0);
    };
    out.compute = require(compute, weights.compute, "compute", "SmActivity or TensorActivity");
    out.memory  = require(memory, weights.memory, "memory", "MemoryBandwidthUtilization");
    out.network = require(network, weights.network, "network", "NvlinkTxBandwidth or NvlinkRxBandwidth");
    out.overall = unit_clamp(weights.compute * out.compute + weights.memory * out.memory + weights.network * out.network);
    return out;
}

ExportFormat parse_export_format(std::string_view text)
{
    if (text == "csv")
    {
        return ExportFormat::Csv;
    }
    if (text == "json")
    {
        return ExportFormat::Json;
    }
    throw PreconditionError(fmt::format("export format must be csv or json (got '{}')", text));
}

std::vector<std::filesystem::path> export_series(const std::vector<MetricSeries> &series,
                                                 ExportFormat format,
                                                 const std::filesystem::path &dir)
{
    std::map<MetricField, std::vector<const MetricSeries *>> by_field;
    for (const auto &s : series)
    {
        by_field[s.field].push_back(&s);
    }
    std::vector<std::filesystem::path> written;
    if (by_field.empty())
    {
        return written;
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
    {
        throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
    }
    for (auto &[field, list] : by_field)
    {
        std::stable_sort(list.begin(), list.end(), [](const MetricSeries *a, const MetricSeries *b) { return a->gpu < b->gpu; });
        auto name = std::string(probe::field_name(field));
        std::filesystem::path path = dir / (name + (format == ExportFormat::Csv ? ".csv" : ".json"));
        std::string body;
        if (format == ExportFormat::Csv)
        {
            body = "timestamp,gpu,value\n";
            for (const auto *s : list)
            {
                for (const auto &p : s->samples)
                {
                    body += fmt::format("{},{},{}\n", p.timestamp_ms, s->gpu.str(), csv_number(p.value));
                }
            }
        }
        else
        {
            nlohmann::ordered_json doc;
            doc["field"]   = name;
            doc["unit"]    = std::string(probe::to_string(probe::field_unit(field)));
            doc["columns"] = {"timestamp", "gpu", "value"};
            auto rows      = nlohmann::ordered_json::array();
            for (const auto *s : list)
            {
                for (const auto &p : s->samples)
                {
                    rows.push_back({p.timestamp_ms, s->gpu.str(), p.value});
                }
            }
            doc["rows"] = std::move(rows);
            body        = doc.dump(2) + "\n";
        }
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << body;
        out.close();
        if (!out)
        {
            throw IoError(fmt::format("cannot write '{}'", path.string()));
        }
        written.push_back(path);
    }
    return written;
}

std::vector<MetricSeries> read_series(const std::filesystem::path &file)
{
    auto text  = yaml::read_file(file);
    auto field = field_from_file(file);
    std::vector<std::tuple<std::int64_t, std::string, double>> rows;

    if (file.extension() == ".json")
    {
        nlohmann::json doc;
        try
        {
            doc = nlohmann::json::parse(text);
            if (doc.at("field").get<std::string>() != probe::field_name(field))
            {
                throw SyntaxError(fmt::format("{}: field does not match the file name", file.string()), 1, 1);
            }
            for (const auto &row : doc.at("rows"))
            {
                rows.emplace_back(row.at(0).get<std::int64_t>(), row.at(1).get<std::string>(), row.at(2).get<double>());
            }
        }
        catch (const nlohmann::json::exception &e)
        {
            throw SyntaxError(fmt::format("{}: {}", file.string(), e.what()), 1, 1);
        }
        return group_rows(field, rows);
    }

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (line_no == 1)
        {
            if (line != "timestamp,gpu,value")
            {
                throw SyntaxError(fmt::format("{}: unexpected header '{}'", file.string(), line), 1, 1);
            }
            continue;
        }
        if (line.empty())
        {
            continue;
        }
        auto c1 = line.find(',');
        auto c2 = line.rfind(',');
        if (c1 == std::string::npos || c1 == c2)
        {
            throw SyntaxError(fmt::format("{}: malformed row '{}'", file.string(), line), line_no, 1);
        }
        std::int64_t ts = 0;
        double value    = 0.0;
        auto ts_text    = std::string_view(line).substr(0, c1);
        auto v_text     = std::string_view(line).substr(c2 + 1);
        auto r1         = std::from_chars(ts_text.data(), ts_text.data() + ts_text.size(), ts);
        auto r2         = std::from_chars(v_text.data(), v_text.data() + v_text.size(), value);
        if (r1.ec != std::errc() || r2.ec != std::errc())
        {
            throw SyntaxError(fmt::format("{}: malformed row '{}'", file.string(), line), line_no, 1);
        }
        rows.emplace_back(ts, line.substr(c1 + 1, c2 - c1 - 1), value);
    }
    return group_rows(field, rows);
}

} // namespace vetgate::saturation
