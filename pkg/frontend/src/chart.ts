/**
 * Minimal SVG chart rendering: multi-series line charts and grouped bars.
 * No DOM, no canvas; the SVG string is assembled directly.
 */

export interface Series {
  label: string;
  xs: number[];
  ys: number[];
}

export interface LineChartOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  logY?: boolean;
  width?: number;
  height?: number;
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const MARGIN = { top: 40, right: 30, bottom: 48, left: 64 };

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function niceTicks(lo: number, hi: number, count = 6): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = span / (count * step);
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * mult;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12 * span; v += s) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e5 || a < 1e-3) return v.toExponential(1);
  return Number(v.toPrecision(5)).toString();
}

/** Render a multi-series line chart; series may have different x supports. */
export function lineChart(series: Series[], opts: LineChartOptions): string {
  if (series.length === 0 || series.every((s) => s.xs.length === 0)) {
    throw new Error("nothing to plot: all series are empty");
  }
  const width = opts.width ?? 760;
  const height = opts.height ?? 480;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const finitePoints = series.flatMap((s) =>
    s.xs.map((x, i) => [x, s.ys[i]] as const).filter(([x, y]) =>
      Number.isFinite(x) && Number.isFinite(y) && (!opts.logY || y > 0)),
  );
  if (finitePoints.length === 0) {
    throw new Error(opts.logY
      ? "nothing to plot: no positive finite values for a log axis"
      : "nothing to plot: no finite values");
  }
  const xs = finitePoints.map(([x]) => x);
  const ysRaw = finitePoints.map(([, y]) => y);
  const ys = opts.logY ? ysRaw.map(Math.log10) : ysRaw;
  let [xLo, xHi] = [Math.min(...xs), Math.max(...xs)];
  let [yLo, yHi] = [Math.min(...ys), Math.max(...ys)];
  if (xLo === xHi) [xLo, xHi] = [xLo - 1, xHi + 1];
  if (yLo === yHi) [yLo, yHi] = [yLo - 1, yHi + 1];
  const padY = 0.05 * (yHi - yLo);
  yLo -= padY;
  yHi += padY;

  const toX = (x: number) => MARGIN.left + ((x - xLo) / (xHi - xLo)) * plotW;
  const toY = (y: number) => MARGIN.top + plotH - ((y - yLo) / (yHi - yLo)) * plotH;

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(`<text x="${width / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="16">${esc(opts.title)}</text>`);

  // axes + grid
  for (const tick of niceTicks(yLo, yHi)) {
    const y = toY(tick);
    const label = opts.logY ? `1e${fmt(tick)}` : fmt(tick);
    parts.push(`<line x1="${MARGIN.left}" y1="${y}" x2="${width - MARGIN.right}" y2="${y}" stroke="#ddd"/>`);
    parts.push(`<text x="${MARGIN.left - 6}" y="${y + 4}" text-anchor="end" font-family="sans-serif" font-size="11">${label}</text>`);
  }
  for (const tick of niceTicks(xLo, xHi)) {
    const x = toX(tick);
    parts.push(`<line x1="${x}" y1="${MARGIN.top}" x2="${x}" y2="${height - MARGIN.bottom}" stroke="#eee"/>`);
    parts.push(`<text x="${x}" y="${height - MARGIN.bottom + 16}" text-anchor="middle" font-family="sans-serif" font-size="11">${fmt(tick)}</text>`);
  }
  parts.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#333"/>`);
  parts.push(`<text x="${width / 2}" y="${height - 10}" text-anchor="middle" font-family="sans-serif" font-size="13">${esc(opts.xLabel)}</text>`);
  parts.push(`<text x="16" y="${height / 2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 ${height / 2})">${esc(opts.yLabel)}${opts.logY ? " (log scale)" : ""}</text>`);

  series.forEach((s, idx) => {
    const color = PALETTE[idx % PALETTE.length];
    const points = s.xs
      .map((x, i) => [x, s.ys[i]] as const)
      .filter(([x, y]) => Number.isFinite(x) && Number.isFinite(y) && (!opts.logY || y > 0))
      .map(([x, y]) => `${toX(x).toFixed(2)},${toY(opts.logY ? Math.log10(y) : y).toFixed(2)}`);
    if (points.length > 0) {
      parts.push(`<polyline points="${points.join(" ")}" fill="none" stroke="${color}" stroke-width="1.6"/>`);
    }
    const ly = MARGIN.top + 14 + idx * 18;
    parts.push(`<line x1="${width - MARGIN.right - 130}" y1="${ly - 4}" x2="${width - MARGIN.right - 106}" y2="${ly - 4}" stroke="${color}" stroke-width="2"/>`);
    parts.push(`<text x="${width - MARGIN.right - 100}" y="${ly}" font-family="sans-serif" font-size="12">${esc(s.label)}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n");
}

export interface Bar {
  label: string;
  value: number | null;
}

/** Grouped bar chart; null values render as hatched "not reached" markers. */
export function barChart(bars: Bar[], opts: { title: string; yLabel: string }): string {
  if (bars.length === 0) {
    throw new Error("nothing to plot: no bars");
  }
  const width = 560;
  const height = 420;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;
  const values = bars.map((b) => b.value).filter((v): v is number => v !== null);
  const yHi = values.length > 0 ? Math.max(...values) * 1.1 : 1;

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(`<text x="${width / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="16">${esc(opts.title)}</text>`);
  for (const tick of niceTicks(0, yHi)) {
    const y = MARGIN.top + plotH - (tick / yHi) * plotH;
    parts.push(`<line x1="${MARGIN.left}" y1="${y}" x2="${width - MARGIN.right}" y2="${y}" stroke="#ddd"/>`);
    parts.push(`<text x="${MARGIN.left - 6}" y="${y + 4}" text-anchor="end" font-family="sans-serif" font-size="11">${fmt(tick)}</text>`);
  }
  const slot = plotW / bars.length;
  bars.forEach((bar, idx) => {
    const x = MARGIN.left + idx * slot + slot * 0.2;
    const w = slot * 0.6;
    if (bar.value === null) {
      parts.push(`<rect x="${x}" y="${MARGIN.top}" width="${w}" height="${plotH}" fill="none" stroke="#999" stroke-dasharray="4 3"/>`);
      parts.push(`<text x="${x + w / 2}" y="${MARGIN.top + plotH / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" fill="#666">not reached</text>`);
    } else {
      const h = (bar.value / yHi) * plotH;
      parts.push(`<rect x="${x}" y="${MARGIN.top + plotH - h}" width="${w}" height="${h}" fill="${PALETTE[idx % PALETTE.length]}"/>`);
      parts.push(`<text x="${x + w / 2}" y="${MARGIN.top + plotH - h - 6}" text-anchor="middle" font-family="sans-serif" font-size="12">${fmt(bar.value)}</text>`);
    }
    parts.push(`<text x="${x + w / 2}" y="${height - MARGIN.bottom + 18}" text-anchor="middle" font-family="sans-serif" font-size="12">${esc(bar.label)}</text>`);
  });
  parts.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#333"/>`);
  parts.push(`<text x="16" y="${height / 2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 ${height / 2})">${esc(opts.yLabel)}</text>`);
  parts.push("</svg>");
  return parts.join("\n");
}
