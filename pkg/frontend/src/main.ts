import { StudioClient } from "./api";
import { SketchStudio } from "./app";

const root = document.getElementById("app");
if (root) {
  const client = new StudioClient(""); // same-origin service
  new SketchStudio(root, client);
}
