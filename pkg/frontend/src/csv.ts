import { readFileSync } from 'fs';
import { parse } from 'papaparse';

/** One parsed CSV: leading `#` comment lines plus typed records. */
export interface CsvTable {
  comments: string[];
  rows: Record<string, string | number>[];
}

/**
 * Read one of the simulator's CSV files.
 *
 * The writers put unit notes in `#` comment lines above the header, never
 * quote fields, and leave a column empty when a run failed, so an empty
 * string in a numeric column means "no value", not zero.
 */
export function readCsv(path: string): CsvTable {
  return parseCsv(readFileSync(path, 'utf8'));
}

export function parseCsv(text: string): CsvTable {
  const comments: string[] = [];
  const body: string[] = [];
  for (const line of text.split(/\r?\n/)) {
    if (line.startsWith('#')) {
      comments.push(line);
    } else {
      body.push(line);
    }
  }
  const parsed = parse<Record<string, string | number>>(body.join('\n'), {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new Error(`CSV parse error at row ${first.row}: ${first.message}`);
  }
  // dynamicTyping maps empty fields to null; normalize to '' so callers
  // have a single "missing" sentinel to test against.
  const rows = parsed.data.map((row) => {
    const out: Record<string, string | number> = {};
    for (const [key, value] of Object.entries(row)) {
      out[key] = value === null || value === undefined ? '' : value;
    }
    return out;
  });
  return { comments, rows };
}

/** Numeric cell access: '' (missing) and non-numeric junk become NaN. */
export function num(row: Record<string, string | number>, key: string): number {
  const v = row[key];
  if (typeof v === 'number') return v;
  if (v === '' || v === undefined) return NaN;
  const parsed = Number(v);
  return Number.isFinite(parsed) ? parsed : NaN;
}

export function str(row: Record<string, string | number>, key: string): string {
  const v = row[key];
  return v === undefined || v === null ? '' : String(v);
}
