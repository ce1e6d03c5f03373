import { parseArgs } from 'node:util';
import { writeFileSync } from 'fs';
import { readCsv } from './csv';
import { modeCountChart } from './charts';

const USAGE =
  'usage: node plot_mode_counts.js --in results.csv --out fig.svg [--scheme hybrid-enum]';

function main(): number {
  const { values } = parseArgs({
    options: {
      in: { type: 'string' },
      out: { type: 'string' },
      scheme: { type: 'string' },
    },
  });
  if (!values.in || !values.out) {
    console.error(USAGE);
    return 2;
  }
  writeFileSync(values.out, modeCountChart(readCsv(values.in).rows, values.scheme));
  console.log(`wrote ${values.out}`);
  return 0;
}

try {
  process.exitCode = main();
} catch (err) {
  console.error(err instanceof Error ? err.message : String(err));
  process.exitCode = 1;
}
