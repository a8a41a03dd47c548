/**
 * Metrics-trace schema: the exact CSV contract produced by the simulator.
 *
 * The header must match column-for-column (no reordering, no extras) so that
 * silently mislabeled data can never be plotted.
 */

export const COLUMNS = [
  "t",
  "psi",
  "gap_sq",
  "consensus",
  "upper_loss",
  "lower_loss",
  "task_metric",
  "active_count",
  "avg_cuts",
  "comm_bits_cum",
  "flops_cum",
  "virtual_time",
] as const;

export type ColumnName = (typeof COLUMNS)[number];

export type TraceRow = Record<ColumnName, number>;

export interface TraceFrame {
  label: string;
  rows: TraceRow[];
}

export class SchemaError extends Error {}

/** Parse one metrics CSV; rejects any deviation from the schema by name. */
export function parseMetricsCsv(text: string, label: string): TraceFrame {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${label}: empty file (expected a header line)`);
  }
  const header = lines[0].split(",");
  const expected = COLUMNS as readonly string[];
  const missing = expected.filter((c) => !header.includes(c));
  const extra = header.filter((c) => !expected.includes(c));
  if (missing.length > 0 || extra.length > 0) {
    const parts = [];
    if (missing.length > 0) parts.push(`missing columns: ${missing.join(", ")}`);
    if (extra.length > 0) parts.push(`unknown columns: ${extra.join(", ")}`);
    throw new SchemaError(`${label}: ${parts.join("; ")}`);
  }
  for (let i = 0; i < expected.length; i++) {
    if (header[i] !== expected[i]) {
      throw new SchemaError(
        `${label}: column ${i} is ${header[i]!}, expected ${expected[i]!} (order is fixed)`,
      );
    }
  }

  const rows: TraceRow[] = [];
  let prevT = -Infinity;
  for (let lineNo = 1; lineNo < lines.length; lineNo++) {
    const cells = lines[lineNo].split(",");
    if (cells.length !== expected.length) {
      throw new SchemaError(
        `${label}: line ${lineNo + 1} has ${cells.length} cells, expected ${expected.length}`,
      );
    }
    const row = {} as TraceRow;
    for (let i = 0; i < expected.length; i++) {
      const value = Number(cells[i]);
      if (cells[i] !== "nan" && Number.isNaN(value)) {
        throw new SchemaError(
          `${label}: line ${lineNo + 1}, column ${expected[i]!}: not a number (${cells[i]!})`,
        );
      }
      row[expected[i] as ColumnName] = value;
    }
    if (!(row.t > prevT)) {
      throw new SchemaError(
        `${label}: iteration index must strictly increase (line ${lineNo + 1}: t=${row.t})`,
      );
    }
    prevT = row.t;
    rows.push(row);
  }
  return { label, rows };
}

export interface ModeOutcome {
  virtual_time_to_target: number | null;
  reached: boolean;
  final_upper_loss: number | null;
  virtual_time_total: number;
}

export interface CompareSummary {
  target_upper_loss: number;
  seed?: number;
  argus: ModeOutcome;
  argus_s: ModeOutcome;
  speedup_ratio?: number;
}

/** Parse a compare summary; both mode blocks must be present (paired). */
export function parseCompareSummary(text: string, label: string): CompareSummary {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (err) {
    throw new SchemaError(`${label}: not valid JSON (${(err as Error).message})`);
  }
  const obj = raw as Record<string, unknown>;
  const missing = ["target_upper_loss", "argus", "argus_s"].filter((k) => !(k in obj));
  if (missing.length > 0) {
    throw new SchemaError(`${label}: unpaired summary, missing: ${missing.join(", ")}`);
  }
  for (const mode of ["argus", "argus_s"] as const) {
    const block = obj[mode] as Record<string, unknown>;
    if (typeof block !== "object" || block === null || !("virtual_time_to_target" in block)) {
      throw new SchemaError(`${label}: ${mode} block lacks virtual_time_to_target`);
    }
  }
  return obj as unknown as CompareSummary;
}
