"""
TOON text codec for fdxsic configuration, manifest and model files.

Scenario presets, run manifests and trained equalizers are stored as TOON
documents: dotted scalar keys, inline primitive arrays and tabular blocks.

    scenario.label: EPA
    scenario.int_angles_deg[4]: 60,20,80,-30
    array.n_antennas: 10

    parameters[48]{value}:
      0.125
      -0.031

Floats are written with ``repr`` so a decoded document reproduces every value
bit for bit; run manifests depend on that.
"""

from __future__ import annotations

import json
import re
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Any, TypeAlias

from .errors import ConfigError

Primitive: TypeAlias = str | int | float | bool | None
Value: TypeAlias = Primitive | list[Primitive] | list[dict[str, Primitive]]
FlatDocument: TypeAlias = dict[str, Value]


class ToonEncodingError(ConfigError):
    """Raised when a mapping cannot be written as TOON."""

    pass


class ToonDecodingError(ConfigError):
    """Raised when TOON text is malformed."""

    pass


@dataclass(frozen=True)
class TableHeader:
    """Header of a tabular block: ``name[n_rows]{field,...}:``."""

    name: str
    fields: tuple[str, ...]
    n_rows: int


_KEY = r"[A-Za-z_][A-Za-z0-9_.]*"

_TABLE_RE = re.compile(
    rf"^(?P<name>{_KEY})\[(?P<n>\d+)\]\{{(?P<fields>[^}}]*)\}}:\s*$"
)
_ARRAY_RE = re.compile(rf"^(?P<name>{_KEY})\[(?P<n>\d+)\]:\s*(?P<values>.*?)\s*$")
_SCALAR_RE = re.compile(rf"^(?P<key>{_KEY})\s*:\s*(?P<value>.*?)\s*$")


def is_primitive(value: Any) -> bool:
    return isinstance(value, (str, int, float, bool)) or value is None


def format_value(value: Primitive) -> str:
    """
    Render a primitive as a TOON cell.

    Strings stay bare unless they contain a delimiter, a quote, surrounding
    whitespace, or would otherwise be read back as another type.
    """
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)

    s = str(value)
    if s == "" or s != s.strip() or any(ch in s for ch in ',"\n\r#'):
        return json.dumps(s, ensure_ascii=False)
    if not isinstance(parse_value(s), str):
        return json.dumps(s, ensure_ascii=False)
    return s


def parse_value(cell: str) -> Primitive:
    """
    Type a single cell: literals, quoted strings, ints, floats, bare strings.

    Also used by ``--set key=value`` overrides, so command-line values follow
    the same typing rules as the files.
    """
    s = cell.strip()
    if s == "true":
        return True
    if s == "false":
        return False
    if s == "null":
        return None
    if len(s) >= 2 and s[0] == '"' and s[-1] == '"':
        try:
            text: str = json.loads(s)
        except json.JSONDecodeError as exc:
            raise ToonDecodingError(f"Invalid quoted string cell: {s!r}") from exc
        return text
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def split_cells(raw: str) -> list[str]:
    """Split a comma-separated row, honouring JSON-style quoted cells."""
    cells: list[str] = []
    current: list[str] = []
    in_quotes = False
    escape = False

    for ch in raw:
        if escape:
            escape = False
        elif ch == "\\" and in_quotes:
            escape = True
        elif ch == '"':
            in_quotes = not in_quotes
        elif ch == "," and not in_quotes:
            cells.append("".join(current))
            current = []
            continue
        current.append(ch)

    if escape or in_quotes:
        raise ToonDecodingError(f"Unterminated quoted value in row: {raw!r}")

    cells.append("".join(current))
    return cells


class ToonCodec:
    """
    Encoder/decoder for the TOON subset fdxsic writes.

    Supported value shapes:
        * primitives                    -> ``key: value``
        * lists of primitives           -> ``key[N]: v1,v2``
        * lists of flat mappings        -> ``key[N]{cols}:`` + indented rows

    Documents are flat: hierarchy lives in dotted keys such as
    ``scenario.label``, which is what the scenario loader and the override
    machinery address.
    """

    # ------------------------------------------------------------------
    # Encoding
    # ------------------------------------------------------------------

    def encode(self, data: Mapping[str, Any], *, header: str | None = None) -> str:
        """
        Encode a mapping into TOON text.

        Args:
            data: Mapping of keys to primitives or lists.
            header: Optional comment written as ``# header`` on the first line.

        Raises:
            TypeError: for non-mapping input or unsupported value types.
            ToonEncodingError: for nested mappings, heterogeneous table rows
                or non-primitive table cells.
        """
        if not isinstance(data, Mapping):
            raise TypeError(f"ToonCodec.encode expects a mapping, got {type(data)}")

        scalars: list[str] = []
        blocks: list[str] = []
        for key, value in data.items():
            if isinstance(value, Mapping):
                raise ToonEncodingError(
                    f"Nested mapping under '{key}'; write its entries as dotted keys."
                )
            if isinstance(value, Sequence) and not isinstance(value, str):
                blocks.append(self._encode_sequence(key, value))
            elif is_primitive(value):
                scalars.append(f"{key}: {format_value(value)}")
            else:
                raise TypeError(
                    f"Unsupported value for key '{key}': {value!r} (type {type(value)})"
                )

        parts: list[str] = []
        if header is not None:
            parts.append(f"# {header}")
        if scalars:
            parts.append("\n".join(scalars))
        parts.extend(blocks)
        return "\n\n".join(parts) + "\n"

    @staticmethod
    def _encode_sequence(key: str, seq: Sequence[Any]) -> str:
        if len(seq) == 0:
            return f"{key}[0]:"

        if all(is_primitive(item) for item in seq):
            return f"{key}[{len(seq)}]: " + ",".join(format_value(v) for v in seq)

        if all(isinstance(item, Mapping) for item in seq):
            rows = [_table_row(key, row) for row in seq]
            fields = list(rows[0])
            for idx, row in enumerate(rows[1:], start=1):
                if list(row) != fields:
                    raise ToonEncodingError(
                        f"Row {idx} of '{key}' has fields {list(row)!r}, "
                        f"expected {fields!r}."
                    )
            lines = [f"{key}[{len(rows)}]{{{','.join(fields)}}}:"]
            lines.extend(
                "  " + ",".join(format_value(row[f]) for f in fields) for row in rows
            )
            return "\n".join(lines)

        raise ToonEncodingError(
            f"Cannot encode list for key '{key}': mixed or unsupported element types."
        )

    # ------------------------------------------------------------------
    # Decoding
    # ------------------------------------------------------------------

    def decode(self, text: str) -> dict[str, Any]:
        """
        Decode TOON text produced by :meth:`encode` (or written by hand).

        Blank lines and ``#`` comment lines are ignored. Duplicate keys,
        bad row counts and malformed lines raise :class:`ToonDecodingError`.
        """
        flat: FlatDocument = {}
        for key, value in self._iter_items(text):
            if key in flat:
                raise ToonDecodingError(
                    f"Key '{key}' already exists; duplicate entries are not allowed."
                )
            flat[key] = value

        return dict(flat)

    def _iter_items(self, text: str) -> Iterator[tuple[str, Value]]:
        if not isinstance(text, str):
            raise TypeError(f"ToonCodec.decode expects a string, got {type(text)}")

        lines = text.splitlines()
        i = 0
        while i < len(lines):
            line = lines[i]
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                i += 1
                continue
            if line[0].isspace():
                raise ToonDecodingError(f"Unexpected indented line {i + 1}: {line!r}")

            table = _TABLE_RE.match(stripped)
            if table:
                header = _parse_table_header(table)
                i += 1
                body: list[str] = []
                while i < len(lines) and (
                    not lines[i].strip() or lines[i][0].isspace()
                ):
                    if lines[i].strip():
                        body.append(lines[i].strip())
                    i += 1
                yield header.name, _parse_table_rows(header, body)
                continue

            array = _ARRAY_RE.match(stripped)
            if array:
                name, n_items = array.group("name"), int(array.group("n"))
                raw = array.group("values")
                values = [parse_value(c) for c in split_cells(raw)] if raw else []
                if len(values) != n_items:
                    raise ToonDecodingError(
                        f"Array '{name}' declares length {n_items}, "
                        f"but {len(values)} values were parsed."
                    )
                yield name, values
                i += 1
                continue

            scalar = _SCALAR_RE.match(stripped)
            if not scalar:
                raise ToonDecodingError(f"Invalid line {i + 1}: {line!r}")
            raw_value = scalar.group("value")
            yield scalar.group("key"), parse_value(raw_value) if raw_value else None
            i += 1


def _table_row(key: str, row: Mapping[str, Any]) -> dict[str, Primitive]:
    for field, value in row.items():
        if not is_primitive(value):
            raise ToonEncodingError(
                f"Table '{key}' field '{field}' holds {type(value).__name__}; "
                "table cells must be primitives."
            )
    return dict(row)


def _parse_table_header(match: re.Match[str]) -> TableHeader:
    fields = tuple(f.strip() for f in match.group("fields").split(",") if f.strip())
    if not fields:
        raise ToonDecodingError(
            f"Table '{match.group('name')}' must list at least one field."
        )
    return TableHeader(name=match.group("name"), fields=fields, n_rows=int(match.group("n")))


def _parse_table_rows(header: TableHeader, body: list[str]) -> list[dict[str, Primitive]]:
    rows: list[dict[str, Primitive]] = []
    for idx, line in enumerate(body):
        cells = split_cells(line)
        if len(cells) != len(header.fields):
            raise ToonDecodingError(
                f"Row {idx} in table '{header.name}' has {len(cells)} cells; "
                f"{len(header.fields)} expected."
            )
        rows.append(
            {f: parse_value(c) for f, c in zip(header.fields, cells, strict=True)}
        )
    if len(rows) != header.n_rows:
        raise ToonDecodingError(
            f"Header for table '{header.name}' declares {header.n_rows} rows, "
            f"but {len(rows)} rows were parsed."
        )
    return rows
