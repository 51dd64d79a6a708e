/** Snapshot validation against the committed schema (2020-12 dialect). */

import Ajv2020 from "ajv/dist/2020";
import schema from "../../docs/snapshot.schema.json";
import type { Snapshot } from "./types";

const ajv = new Ajv2020({ allErrors: false });
const check = ajv.compile(schema);

export class SchemaViolation extends Error {
  constructor(detail: string) {
    super(`snapshot failed schema validation: ${detail}`);
  }
}

/** Returns the snapshot typed, or throws SchemaViolation; never silent. */
export function validateSnapshot(doc: unknown): Snapshot {
  if (!check(doc)) {
    const first = check.errors?.[0];
    const where = first?.instancePath || "/";
    throw new SchemaViolation(`${where} ${first?.message ?? "unknown error"}`);
  }
  return doc as unknown as Snapshot;
}
