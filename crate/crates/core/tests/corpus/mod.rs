//! Malformed queries shared by the parser tests.

/// Malformed inputs with the 1-based (line, col) where the error must point.
pub const MALFORMED: [(&str, usize, usize); 50] = [
    ("", 1, 1),
    ("SELECT", 1, 7),
    ("SELECT *", 1, 9),
    ("SELECT * FROM", 1, 14),
    ("SELECT * FROM v", 1, 16),
    ("SELECT * FROM v WHERE", 1, 22),
    ("SELECT * FROM v WHERE m", 1, 24),
    ("SELECT * FROM v WHERE m =", 1, 26),
    ("SELECT * FROM v WHERE m = 0", 1, 28),
    ("SELECT * FROM v WHERE m = 0 BECAUSE", 1, 36),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a OR", 1, 41),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a AND", 1, 42),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH", 1, 43),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH BANDWIDTH", 1, 53),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH BANDWIDTH =", 1, 55),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH BANDWIDTH = 20,", 1, 59),
    ("FROM v", 1, 1),
    ("SELECT FROM v", 1, 8),
    ("SELECT a, FROM v", 1, 11),
    ("SELECT a b FROM v", 1, 10),
    ("SELECT * v", 1, 10),
    ("SELECT * FROM 3", 1, 15),
    ("SELECT * FROM select", 1, 15),
    ("SELECT * FROM v m = 0", 1, 17),
    ("SELECT * FROM v WHERE = 0", 1, 23),
    ("SELECT * FROM v WHERE m 0", 1, 25),
    ("SELECT * FROM v WHERE m == 0", 1, 26),
    ("SELECT * FROM v WHERE m = x", 1, 27),
    ("SELECT * FROM v WHERE m = 0 a", 1, 29),
    ("SELECT * FROM v WHERE m = 0 BECAUSE 5", 1, 37),
    ("SELECT * FROM v WHERE m = 0 BECAUSE OR a", 1, 37),
    ("SELECT * FROM v WHERE m = 0 BECAUSE RISING", 1, 37),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a RISING FALLING", 1, 46),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a b", 1, 39),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a, b", 1, 38),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a OR OR b", 1, 42),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH gamma = 1", 1, 44),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH BANDWIDTH 20", 1, 54),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH BANDWIDTH = 1", 1, 56),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH BANDWIDTH = 2.5", 1, 56),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH DELTA = -1", 1, 52),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH ALPHA = 0", 1, 52),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH ALPHA = 1.5", 1, 52),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH DELTA = 3, DELTA = 4", 1, 55),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a WITH DELTA = 3 ALPHA = 0.1", 1, 54),
    ("SELECT # FROM v", 1, 8),
    ("SELECT * FROM v WHERE m ! 0", 1, 25),
    ("SELECT *\nFROM v\nWHERE m = 0 BECAUSE #", 3, 21),
    ("SELECT *\n  FROM v WHERE\n\n  m = ; BECAUSE a", 4, 7),
    ("SELECT * FROM v WHERE m = 0 BECAUSE a;", 1, 38),
];
