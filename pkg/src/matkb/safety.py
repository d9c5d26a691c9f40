"""Read-only SQL gate for generated statements.

Classification is by tokenization, not substring search: string
literals and comments are consumed before any keyword is inspected, so
`SELECT * FROM t WHERE note = 'delete me'` passes while comment- or
case-obfuscated write statements do not. Only a single top-level
SELECT (or WITH ... SELECT) survives; everything else is denied with a
rule identifier and the offending fragment.
"""

from __future__ import annotations

from dataclasses import dataclass

RULE_EMPTY = "empty-statement"
RULE_PARSE = "parse-failure"
RULE_MULTI = "multi-statement"
RULE_WRITE = "write-statement"
RULE_NOT_SELECT = "not-a-select"
RULE_INTO = "select-into"

# Any of these appearing as a keyword token anywhere denies the statement.
_WRITE_KEYWORDS = frozenset(
    {
        "DELETE", "TRUNCATE", "DROP", "UPDATE", "INSERT", "REPLACE", "ALTER",
        "CREATE", "GRANT", "REVOKE", "MERGE", "UPSERT", "RENAME", "ATTACH",
        "DETACH", "PRAGMA", "VACUUM", "REINDEX", "COPY", "LOAD", "CALL",
        "EXEC", "EXECUTE", "SET", "LOCK", "OUTFILE", "DUMPFILE", "BEGIN",
        "COMMIT", "ROLLBACK", "SAVEPOINT",
    }
)

_ALLOWED_FIRST = frozenset({"SELECT", "WITH"})


@dataclass(frozen=True)
class SafetyVerdict:
    allowed: bool
    rule: str = ""
    fragment: str = ""

    @property
    def reason(self) -> str:
        return f"{self.rule}: {self.fragment}" if not self.allowed else ""

    def to_dict(self) -> dict:
        return {"allowed": self.allowed, "rule": self.rule, "fragment": self.fragment}


class SqlParseError(Exception):
    pass


def tokenize(sql: str) -> list[tuple[str, str]]:
    """Lex into (kind, text) tokens: word, string, number, punct.
    Comments and whitespace are dropped. Unterminated strings or block
    comments raise SqlParseError."""
    tokens: list[tuple[str, str]] = []
    i, n = 0, len(sql)
    while i < n:
        ch = sql[i]
        if ch.isspace():
            i += 1
            continue
        if sql.startswith("--", i):
            j = sql.find("\n", i)
            i = n if j == -1 else j + 1
            continue
        if sql.startswith("/*", i):
            j = sql.find("*/", i + 2)
            if j == -1:
                raise SqlParseError("unterminated block comment")
            i = j + 2
            continue
        if ch in "'\"`":
            j = i + 1
            while j < n:
                if sql[j] == ch:
                    if j + 1 < n and sql[j + 1] == ch:  # doubled quote escape
                        j += 2
                        continue
                    break
                j += 1
            else:
                raise SqlParseError("unterminated string literal")
            if j >= n:
                raise SqlParseError("unterminated string literal")
            tokens.append(("string", sql[i : j + 1]))
            i = j + 1
            continue
        if ch == "[":  # bracket-quoted identifier
            j = sql.find("]", i)
            if j == -1:
                raise SqlParseError("unterminated bracketed identifier")
            tokens.append(("string", sql[i : j + 1]))
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and sql[i + 1].isdigit()):
            j = i
            while j < n and (sql[j].isalnum() or sql[j] in "._+-eE"):
                j += 1
            tokens.append(("number", sql[i:j]))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (sql[j].isalnum() or sql[j] == "_"):
                j += 1
            tokens.append(("word", sql[i:j]))
            i = j
            continue
        tokens.append(("punct", ch))
        i += 1
    return tokens


def split_statements(tokens: list[tuple[str, str]]) -> list[list[tuple[str, str]]]:
    statements: list[list[tuple[str, str]]] = []
    current: list[tuple[str, str]] = []
    for kind, text in tokens:
        if kind == "punct" and text == ";":
            if current:
                statements.append(current)
                current = []
        else:
            current.append((kind, text))
    if current:
        statements.append(current)
    return statements


def safety_check(sql: str) -> SafetyVerdict:
    """Admit exactly one top-level read-only SELECT statement."""
    try:
        tokens = tokenize(sql)
    except SqlParseError as exc:
        return SafetyVerdict(False, RULE_PARSE, str(exc))
    statements = split_statements(tokens)
    if not statements:
        return SafetyVerdict(False, RULE_EMPTY, "no statement found")
    if len(statements) > 1:
        first_extra = " ".join(t for _, t in statements[1][:4])
        return SafetyVerdict(False, RULE_MULTI, first_extra)
    stmt = statements[0]
    first_kind, first_text = stmt[0]
    first_word = first_text.upper() if first_kind == "word" else ""
    if first_word not in _ALLOWED_FIRST:
        rule = RULE_WRITE if first_word in _WRITE_KEYWORDS else RULE_NOT_SELECT
        return SafetyVerdict(False, rule, first_text)
    has_select = False
    for kind, text in stmt:
        if kind != "word":
            continue
        word = text.upper()
        if word in _WRITE_KEYWORDS:
            rule = RULE_INTO if word in ("OUTFILE", "DUMPFILE") else RULE_WRITE
            return SafetyVerdict(False, rule, text)
        if word == "INTO":
            return SafetyVerdict(False, RULE_INTO, text)
        if word == "SELECT":
            has_select = True
    if not has_select:
        return SafetyVerdict(False, RULE_NOT_SELECT, first_text)
    return SafetyVerdict(True)


def referenced_key_fields(sql: str, schema: dict[str, tuple[str, ...]]) -> list[str]:
    """table.column names the statement references, resolved against the
    schema: tables named after FROM/JOIN, then identifiers matching any
    referenced table's columns (or qualified table.column pairs)."""
    try:
        tokens = tokenize(sql)
    except SqlParseError:
        return []
    words = [(i, t) for i, (k, t) in enumerate(tokens) if k == "word"]
    tables: list[str] = []
    for pos, (i, text) in enumerate(words):
        if text.upper() in ("FROM", "JOIN") and pos + 1 < len(words):
            candidate = words[pos + 1][1]
            if candidate in schema and candidate not in tables:
                tables.append(candidate)
    found: list[str] = []

    def add(table: str, column: str) -> None:
        name = f"{table}.{column}"
        if name not in found:
            found.append(name)

    # explicit table.column references
    for idx in range(len(tokens) - 2):
        k1, t1 = tokens[idx]
        k2, t2 = tokens[idx + 1]
        k3, t3 = tokens[idx + 2]
        if k1 == "word" and (k2, t2) == ("punct", ".") and k3 == "word":
            if t1 in schema and t3 in schema[t1]:
                add(t1, t3)
    # bare column names resolved against referenced tables
    for _, text in words:
        for table in tables:
            if text in schema[table]:
                add(table, text)
    return found
