import { existsSync, mkdtempSync, readdirSync, readFileSync, statSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { main } from "../src/cli.js";
import { loadCsv, loadSummary, renderCompare, renderCurves } from "../src/commands.js";
import { COLUMNS } from "../src/schema.js";

const FIXTURES = join(__dirname, "..", "fixtures");

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "plotkit-"));
}

describe("renderCurves", () => {
  it("writes a non-empty psi-decay figure from an engine trace", () => {
    const out = join(tmp(), "psi.svg");
    renderCurves([loadCsv(join(FIXTURES, "metrics.csv"))], { x: "t", y: "psi" }, out);
    expect(statSync(out).size).toBeGreaterThan(500);
    const svg = readFileSync(out, "utf8");
    expect(svg).toContain("<svg");
    expect(svg).toContain("polyline");
    expect(svg).toContain("log scale"); // psi defaults to a log axis
  });

  it("overlays two frames against virtual time with a legend", () => {
    const frames = [
      loadCsv(join(FIXTURES, "metrics_argus.csv")),
      loadCsv(join(FIXTURES, "metrics_argus_s.csv")),
    ];
    const out = join(tmp(), "cmp.svg");
    renderCurves(frames, { x: "virtual_time", y: "upper_loss" }, out);
    const svg = readFileSync(out, "utf8");
    expect(svg).toContain("metrics_argus");
    expect(svg).toContain("metrics_argus_s");
  });

  it("refuses an empty frame and writes no file", () => {
    const dir = tmp();
    const out = join(dir, "nope.svg");
    const empty = { label: "empty", rows: [] };
    expect(() => renderCurves([empty], { x: "t", y: "psi" }, out)).toThrow(/empty/);
    expect(existsSync(out)).toBe(false);
    expect(readdirSync(dir)).toHaveLength(0); // no temp leftovers either
  });

  it("rejects unknown columns with the column name", () => {
    const frame = loadCsv(join(FIXTURES, "metrics.csv"));
    expect(() => renderCurves([frame], { x: "t", y: "bogus" }, join(tmp(), "x.svg")))
      .toThrow(/unknown column bogus/);
  });

  it("does not mutate its input file", () => {
    const path = join(FIXTURES, "metrics.csv");
    const before = readFileSync(path);
    renderCurves([loadCsv(path)], { x: "t", y: "consensus", logY: false },
      join(tmp(), "c.svg"));
    expect(readFileSync(path).equals(before)).toBe(true);
  });
});

describe("renderCompare", () => {
  it("writes a bar figure from a paired summary", () => {
    const out = join(tmp(), "bars.svg");
    renderCompare([loadSummary(join(FIXTURES, "compare_summary.json"))], out);
    const svg = readFileSync(out, "utf8");
    expect(statSync(out).size).toBeGreaterThan(300);
    expect(svg).toContain("async");
    expect(svg).toContain("sync");
  });

  it("marks unreached targets instead of failing", () => {
    const out = join(tmp(), "bars.svg");
    renderCompare([{
      target_upper_loss: 0.5,
      argus: { virtual_time_to_target: 10, reached: true, final_upper_loss: 0.1, virtual_time_total: 50 },
      argus_s: { virtual_time_to_target: null, reached: false, final_upper_loss: 0.9, virtual_time_total: 50 },
    }], out);
    expect(readFileSync(out, "utf8")).toContain("not reached");
  });

  it("refuses empty input", () => {
    expect(() => renderCompare([], join(tmp(), "x.svg"))).toThrow(/no compare summaries/);
  });
});

describe("cli", () => {
  it("plots curves end to end", () => {
    const out = join(tmp(), "fig.svg");
    const code = main(["curves", "--in", join(FIXTURES, "metrics.csv"),
      "--x", "t", "--y", "psi", "--out", out]);
    expect(code).toBe(0);
    expect(existsSync(out)).toBe(true);
  });

  it("plots compare end to end", () => {
    const out = join(tmp(), "fig.svg");
    const code = main(["compare", "--in", join(FIXTURES, "compare_summary.json"),
      "--out", out]);
    expect(code).toBe(0);
    expect(existsSync(out)).toBe(true);
  });

  it("reports schema mismatch with a diagnostic exit code", () => {
    const code = main(["curves", "--in", join(FIXTURES, "compare_summary.json"),
      "--out", join(tmp(), "x.svg")]);
    expect(code).toBe(1);
  });

  it("rejects unknown subcommands and missing flags", () => {
    expect(main(["nonsense"])).toBe(1);
    expect(main(["curves"])).toBe(1);
  });

  it("schema columns stay pinned to the simulator contract", () => {
    expect([...COLUMNS]).toEqual([
      "t", "psi", "gap_sq", "consensus", "upper_loss", "lower_loss",
      "task_metric", "active_count", "avg_cuts", "comm_bits_cum",
      "flops_cum", "virtual_time",
    ]);
  });
});
