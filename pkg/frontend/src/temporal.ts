/**
 * Half-open time spans over calendar dates.
 *
 * Dates are ISO-8601, possibly partial (YYYY or YYYY-MM canonicalize to the
 * first day of the period). A feature is visible at day d when
 * start <= d < end; a missing end means "still standing".
 */

const DATE_RE = /^(\d{4})(?:-(\d{2})(?:-(\d{2}))?)?$/;

/** Parse a (possibly partial) ISO date to a UTC day number. */
export function parseDate(text: string): number {
  const m = DATE_RE.exec(text.trim());
  if (!m) throw new Error(`unparseable date "${text}"`);
  const year = Number(m[1]);
  const month = m[2] ? Number(m[2]) : 1;
  const day = m[3] ? Number(m[3]) : 1;
  const ms = Date.UTC(year, month - 1, day);
  const check = new Date(ms);
  if (
    check.getUTCFullYear() !== year ||
    check.getUTCMonth() !== month - 1 ||
    check.getUTCDate() !== day
  ) {
    throw new Error(`invalid date "${text}"`);
  }
  return Math.floor(ms / 86_400_000);
}

export interface DatedTags {
  start_date?: unknown;
  end_date?: unknown;
}

/** Visibility under the half-open [start, end) contract. */
export function aliveAt(tags: DatedTags, day: number): boolean {
  if (typeof tags.start_date !== "string") return false;
  const start = parseDate(tags.start_date);
  if (day < start) return false;
  if (typeof tags.end_date === "string") {
    return day < parseDate(tags.end_date);
  }
  return true;
}

/** Day number for January 1st of a slider year. */
export function yearToDay(year: number): number {
  return parseDate(String(year).padStart(4, "0"));
}
