/**
 * The two figure commands: metric curves from trace CSVs and the
 * async-vs-sync time-to-target comparison from paired summaries.
 *
 * Inputs are read-only; outputs are written to a temp file in the target
 * directory and renamed into place so partial files never appear.
 */
import { readFileSync, renameSync, writeFileSync } from "node:fs";
import { basename, dirname, join } from "node:path";

import { Bar, barChart, lineChart, Series } from "./chart.js";
import {
  COLUMNS,
  ColumnName,
  CompareSummary,
  parseCompareSummary,
  parseMetricsCsv,
  TraceFrame,
} from "./schema.js";

export function loadCsv(path: string): TraceFrame {
  const label = basename(path).replace(/\.csv$/, "");
  return parseMetricsCsv(readFileSync(path, "utf8"), label);
}

export function loadSummary(path: string): CompareSummary {
  return parseCompareSummary(readFileSync(path, "utf8"), basename(path));
}

function atomicWrite(outPath: string, content: string): void {
  const tmp = join(dirname(outPath), `.${basename(outPath)}.tmp-${process.pid}`);
  writeFileSync(tmp, content);
  renameSync(tmp, outPath);
}

function requireColumn(name: string): ColumnName {
  if (!(COLUMNS as readonly string[]).includes(name)) {
    throw new Error(`unknown column ${name}; expected one of: ${COLUMNS.join(", ")}`);
  }
  return name as ColumnName;
}

export interface CurvesOptions {
  x: string;
  y: string;
  logY?: boolean;
  title?: string;
}

/** One line per frame; the psi column defaults to a log axis. */
export function renderCurves(frames: TraceFrame[], opts: CurvesOptions, outPath: string): void {
  if (frames.length === 0) {
    throw new Error("no input frames");
  }
  const xCol = requireColumn(opts.x);
  const yCol = requireColumn(opts.y);
  if (frames.every((f) => f.rows.length === 0)) {
    throw new Error("all frames are empty; nothing to plot");
  }
  const logY = opts.logY ?? yCol === "psi";
  const series: Series[] = frames.map((f) => ({
    label: f.label,
    xs: f.rows.map((r) => r[xCol]),
    ys: f.rows.map((r) => r[yCol]),
  }));
  const svg = lineChart(series, {
    title: opts.title ?? `${yCol} vs ${xCol}`,
    xLabel: xCol,
    yLabel: yCol,
    logY,
  });
  atomicWrite(outPath, svg);
}

/** Bar chart of virtual time to the target loss for each mode. */
export function renderCompare(summaries: CompareSummary[], outPath: string): void {
  if (summaries.length === 0) {
    throw new Error("no compare summaries given");
  }
  const bars: Bar[] = [];
  summaries.forEach((summary, idx) => {
    const suffix = summaries.length > 1 ? ` #${idx + 1}` : "";
    bars.push({ label: `async${suffix}`, value: summary.argus.virtual_time_to_target });
    bars.push({ label: `sync${suffix}`, value: summary.argus_s.virtual_time_to_target });
  });
  const target = summaries[0].target_upper_loss;
  const svg = barChart(bars, {
    title: `virtual time to upper loss <= ${target}`,
    yLabel: "virtual time",
  });
  atomicWrite(outPath, svg);
}
