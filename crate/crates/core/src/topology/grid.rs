use std::fmt::Write as _;

use thiserror::Error;

use super::ConflictGraph;

/// Grids larger than this are rejected before any allocation.
const MAX_GRID: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct GridError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> GridError {
    GridError { line, message: message.into() }
}

/// Parses a conflict grid: a line with `n`, then `n` rows of `n`
/// space-separated `0`/`1` cells. Blank trailing lines are ignored.
pub fn parse_conflict_grid(text: &str) -> Result<Vec<Vec<bool>>, GridError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (first_no, first) = lines
        .by_ref()
        .find(|(_, l)| !l.is_empty())
        .ok_or_else(|| err(1, "empty grid file"))?;
    let n: usize = first
        .parse()
        .map_err(|_| err(first_no, format!("expected the matrix size, found `{first}`")))?;
    if n > MAX_GRID {
        return Err(err(first_no, format!("matrix size {n} exceeds {MAX_GRID}")));
    }
    let mut rows = Vec::with_capacity(n);
    let mut last_no = first_no;
    for (no, line) in lines.by_ref() {
        if rows.len() == n {
            if !line.is_empty() {
                return Err(err(no, "unexpected content after the last row"));
            }
            continue;
        }
        last_no = no;
        let mut row = Vec::with_capacity(n);
        for (col, tok) in line.split_whitespace().enumerate() {
            match tok {
                "0" => row.push(false),
                "1" => row.push(true),
                _ => return Err(err(no, format!("column {}: expected 0 or 1, found `{tok}`", col + 1))),
            }
        }
        if row.len() != n {
            return Err(err(no, format!("expected {n} cells, found {}", row.len())));
        }
        rows.push(row);
    }
    if rows.len() != n {
        return Err(err(last_no, format!("expected {n} rows, found {}", rows.len())));
    }
    Ok(rows)
}

pub fn write_conflict_grid(graph: &ConflictGraph) -> String {
    let mut s = format!("{}\n", graph.len());
    for row in graph.rows() {
        let cells: Vec<&str> = row.iter().map(|&c| if c { "1" } else { "0" }).collect();
        let _ = writeln!(s, "{}", cells.join(" "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::load_conflict_matrix;

    #[test]
    fn round_trip() {
        let g = ConflictGraph::from_edges(3, &[(0, 2)]).unwrap();
        let text = write_conflict_grid(&g);
        assert_eq!(text, "3\n0 0 1\n0 0 0\n1 0 0\n");
        let (back, _) = load_conflict_matrix(&parse_conflict_grid(&text).unwrap(), false).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(parse_conflict_grid("2\n0 1\n1\n").unwrap_err().line, 3);
        assert_eq!(parse_conflict_grid("x").unwrap_err().line, 1);
        assert_eq!(parse_conflict_grid("2\n0 2\n0 0").unwrap_err().line, 2);
        assert_eq!(parse_conflict_grid("2\n0 0\n").unwrap_err().line, 2);
        assert!(parse_conflict_grid("").is_err());
        assert!(parse_conflict_grid("1\n0\n1\n").is_err());
    }

    #[test]
    fn zero_sized_grid() {
        assert_eq!(parse_conflict_grid("0\n").unwrap(), Vec::<Vec<bool>>::new());
    }
}
