import { describe, expect, it } from "vitest";
import { aliveAt, parseDate, yearToDay } from "../src/temporal.js";

describe("partial ISO date parsing", () => {
  it("anchors the day count at the Unix epoch", () => {
    expect(parseDate("1970-01-01")).toBe(0);
    expect(parseDate("1970-01-02")).toBe(1);
    expect(parseDate("1969-12-31")).toBe(-1);
  });

  it("canonicalizes partial dates to the first day of the period", () => {
    expect(parseDate("1905")).toBe(parseDate("1905-01-01"));
    expect(parseDate("1905-06")).toBe(parseDate("1905-06-01"));
    expect(parseDate(" 1905-06-15 ")).toBe(parseDate("1905-06-15"));
  });

  it("handles leap years", () => {
    expect(parseDate("1904-03-01") - parseDate("1904-02-28")).toBe(2);
    expect(parseDate("1905-03-01") - parseDate("1905-02-28")).toBe(1);
  });

  it("rejects malformed and impossible dates", () => {
    for (const bad of ["", "nope", "1905-13", "1905-00", "1905-02-30", "05-01-01", "1905/01/01"]) {
      expect(() => parseDate(bad), bad).toThrow();
    }
  });

  it("maps slider years to January 1st", () => {
    expect(yearToDay(1970)).toBe(0);
    expect(yearToDay(1925)).toBe(parseDate("1925-01-01"));
  });
});

describe("half-open [start, end) visibility", () => {
  const tags = { start_date: "1905-01-01", end_date: "1935-01-01" };

  it("includes the start day and excludes the end day", () => {
    expect(aliveAt(tags, parseDate("1905-01-01"))).toBe(true);
    expect(aliveAt(tags, parseDate("1905-01-01") - 1)).toBe(false);
    expect(aliveAt(tags, parseDate("1935-01-01"))).toBe(false);
    expect(aliveAt(tags, parseDate("1935-01-01") - 1)).toBe(true);
  });

  it("treats a missing end date as still standing", () => {
    const open = { start_date: "1905-01-01" };
    expect(aliveAt(open, parseDate("2100-01-01"))).toBe(true);
    expect(aliveAt(open, parseDate("1904-12-31"))).toBe(false);
  });

  it("hides features without a start date", () => {
    expect(aliveAt({}, 0)).toBe(false);
    expect(aliveAt({ end_date: "1935-01-01" }, 0)).toBe(false);
  });
});
