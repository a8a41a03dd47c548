#!/usr/bin/env node
/**
 * plot curves --in a.csv [b.csv ...] --x t --y psi --out fig.svg
 * plot compare --in compare_summary.json [...] --out fig.svg
 */
import { parseArgs } from "node:util";

import { loadCsv, loadSummary, renderCompare, renderCurves } from "./commands.js";

const USAGE = `usage:
  plot curves  --in <csv...>  --x <column> --y <column> --out <svg> [--linear] [--title <t>]
  plot compare --in <summary.json...> --out <svg>`;

export function main(argv: string[]): number {
  const command = argv[0];
  if (command !== "curves" && command !== "compare") {
    console.error(USAGE);
    return 1;
  }
  const { values } = parseArgs({
    args: argv.slice(1),
    options: {
      in: { type: "string", multiple: true },
      x: { type: "string", default: "t" },
      y: { type: "string", default: "psi" },
      out: { type: "string" },
      title: { type: "string" },
      linear: { type: "boolean", default: false },
    },
  });
  const inputs = values.in ?? [];
  if (inputs.length === 0 || !values.out) {
    console.error(USAGE);
    return 1;
  }
  try {
    if (command === "curves") {
      const frames = inputs.map(loadCsv);
      renderCurves(frames, {
        x: values.x!,
        y: values.y!,
        logY: values.linear ? false : undefined,
        title: values.title,
      }, values.out);
    } else {
      renderCompare(inputs.map(loadSummary), values.out);
    }
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  console.log(`wrote ${values.out}`);
  return 0;
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
