//*****************************************************************************
// Copyright 2026 The covct Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//*****************************************************************************
#pragma once

// Minimal CSV reader for the manifest and scores files: comma separated,
// optional double-quoted fields, LF or CRLF line endings, optional UTF-8 BOM.

#include <string>
#include <string_view>
#include <vector>

#include "covct/error.hpp"

namespace covct::csv {

struct Row {
    std::size_t line = 0; // 1-based, header is line 1
    std::vector<std::string> fields;
};

struct Table {
    std::vector<std::string> header;
    std::vector<Row> rows;
};

inline std::vector<std::string> split_line(std::string_view line, const std::string& where) {
    std::vector<std::string> fields;
    std::string field;
    std::size_t i = 0;
    while (true) {
        field.clear();
        if (i < line.size() && line[i] == '"') {
            ++i;
            while (true) {
                if (i >= line.size()) throw Error(ErrorKind::Parse, where + ": unterminated quoted field");
                if (line[i] == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        field.push_back('"');
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                field.push_back(line[i++]);
            }
            if (i < line.size() && line[i] != ',')
                throw Error(ErrorKind::Parse, where + ": unexpected character after quoted field");
        } else {
            while (i < line.size() && line[i] != ',') field.push_back(line[i++]);
        }
        fields.push_back(field);
        if (i >= line.size()) break;
        ++i; // comma
    }
    return fields;
}

/// Parses the whole text. Blank lines are ignored; every data row must have
/// as many fields as the header.
inline Table parse(std::string_view text, const std::string& source) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    Table table;
    std::size_t line_no = 0;
    bool have_header = false;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        auto fields = split_line(line, where);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size())
            throw Error(ErrorKind::Parse, where + ": expected " + std::to_string(table.header.size()) +
                                              " fields, got " + std::to_string(fields.size()));
        table.rows.push_back(Row{line_no, std::move(fields)});
    }
    if (!have_header) throw Error(ErrorKind::EmptyInput, source + ": empty file");
    return table;
}

} // namespace covct::csv
